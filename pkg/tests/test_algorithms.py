import math

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from linbet import algorithms as alg
from linbet.algorithms import (
    AlgoConfig,
    ConfidenceEllipsoid,
    CrtPolicy,
    MenuPolicy,
    MomPolicy,
    TofuPolicy,
    group_median,
    lower_median,
    make_policy,
    median_of_means_select,
    menu_min_horizon,
    menu_radius,
    menu_schedule,
    mom_schedule,
    select_optimistic_arm,
    tofu_threshold,
)
from linbet.environments import generate_instance, lower_bound_instance
from linbet.errors import ConfigError, InvalidInputError
from linbet.linalg import DesignState


def design(d, rows=(), lam=1.0):
    s = DesignState(d, lam)
    for x in rows:
        s.update(x)
    return s


# -- optimistic selection ---------------------------------------------------

def test_zero_radius_picks_greedy():
    ell = ConfidenceEllipsoid(np.array([1.0, 0.0]), 0.0, design(2))
    assert select_optimistic_arm(ell, [[1.0, 0.0], [0.0, 1.0]]) == 0


def test_centred_ellipsoid_uses_norm():
    ell = ConfidenceEllipsoid(np.zeros(2), 1.0, design(2))
    arms = [[1.0, 0.0], [0.0, 2.0]]
    assert select_optimistic_arm(ell, arms) == 1
    assert ell.optimistic_values(arms)[1] == pytest.approx(2.0)


def test_ties_go_to_lowest_index():
    ell = ConfidenceEllipsoid(np.zeros(2), 1.0, design(2))
    assert select_optimistic_arm(ell, [[0.0, 1.0], [1.0, 0.0], [0.0, 1.0]]) == 0


def test_empty_arm_set():
    ell = ConfidenceEllipsoid(np.zeros(2), 1.0, design(2))
    with pytest.raises(InvalidInputError):
        select_optimistic_arm(ell, np.zeros((0, 2)))


def test_closed_form_dominates_rejection_samples():
    rng = np.random.default_rng(0)
    d = 3
    st_ = design(d, rng.normal(size=(8, d)))
    ell = ConfidenceEllipsoid(rng.normal(size=d), 1.3, st_)
    arms = rng.normal(size=(10, d))
    opt = ell.optimistic_values(arms)
    # rejection sampling inside the ellipsoid from its bounding box
    half = ell.beta * np.sqrt(np.diag(st_.V_inv))
    thetas = []
    while len(thetas) < 10_000:
        cand = ell.center + rng.uniform(-1, 1, size=(20_000, d)) * half
        diff = cand - ell.center
        inside = np.einsum("ij,jk,ik->i", diff, st_.V, diff) <= ell.beta ** 2
        thetas.extend(cand[inside])
    thetas = np.array(thetas[:10_000])
    vals = arms @ thetas.T
    assert np.all(vals.max(axis=1) <= opt + 1e-12)
    # sampled maxima approach the closed form
    assert np.max(opt - vals.max(axis=1)) < 0.15 * ell.beta
    for a in arms:
        th = ell.maximizer(a)
        assert a @ th == pytest.approx(ell.optimistic_values(a[None, :])[0], rel=1e-12)
        assert ell.contains(th - 1e-9 * (th - ell.center))


# -- median of means --------------------------------------------------------

def test_lower_median():
    assert lower_median([3.0, 1.0, 2.0, 4.0]) == 2.0
    assert lower_median([5.0]) == 5.0
    with pytest.raises(InvalidInputError):
        lower_median([])


def test_identical_estimates_tie_break():
    est = np.tile([0.3, -1.2], (3, 1))
    j, r = median_of_means_select(est, np.diag([2.0, 5.0]))
    assert j == 0
    np.testing.assert_array_equal(r, np.zeros(3))


def test_median_select_matches_brute_force():
    rng = np.random.default_rng(1)
    for k in (2, 5, 8, 31):
        est = rng.normal(size=(k, 3))
        A = rng.normal(size=(3, 3))
        V = A @ A.T + np.eye(3)
        r = []
        for j in range(k):
            ds = sorted(math.sqrt((est[j] - est[s]) @ V @ (est[j] - est[s])) for s in range(k) if s != j)
            r.append(ds[math.ceil((k - 1) / 2) - 1])
        j, got = median_of_means_select(est, V)
        np.testing.assert_allclose(got, r, rtol=1e-10)
        assert j == int(np.argmin(r))


def test_median_select_three_gamma():
    from linbet.validation import mom_configuration

    rng = np.random.default_rng(2)
    for k in (5, 25, 373):
        for _ in range(30):
            est, theta, V, _ = mom_configuration(rng, k, 3, 1.0)
            j, _ = median_of_means_select(est, V)
            diff = est[j] - theta
            assert math.sqrt(diff @ V @ diff) <= 3.0


# -- MENU -------------------------------------------------------------------

def oracle_k(T, delta):
    return int(mpmath.ceil(24 * mpmath.log(mpmath.e * T / delta)))


def test_menu_schedule_oracle():
    for T, delta in [(20_000, 0.1), (20_000, 0.01), (1024, 0.1), (10**6, 0.05)]:
        k, N = menu_schedule(T, delta)
        assert k == oracle_k(T, delta) and N == T // k


def test_menu_schedule_frozen():
    # 24 * ln(e * 20000 / 0.1) = 316.94...
    assert menu_schedule(20_000, 0.1) == (317, 63)
    assert menu_schedule(20_000, 0.01) == (373, 53)


def test_menu_horizon_gate():
    edge = menu_min_horizon(0.1)
    assert edge == pytest.approx(256 + 24 * (1 + math.log(10)))
    with pytest.raises(ConfigError, match="256"):
        menu_schedule(math.floor(edge), 0.1)
    menu_schedule(math.ceil(edge), 0.1)


def test_menu_schedule_no_epoch():
    with pytest.raises(ConfigError):
        menu_schedule(50, 0.1, check=False)


def test_menu_radius_frozen():
    beta = menu_radius(7, 10, 3.0, 1.0, 1.0, math.sqrt(10))
    assert beta == pytest.approx(3 * (math.sqrt(270) + math.sqrt(10)), rel=1e-14)
    assert beta == pytest.approx(58.781863, abs=1e-6)


def test_menu_radius_growth_for_small_eps():
    b1 = menu_radius(100, 2, 1.0, 0.5, 1.0, 1.0)
    b2 = menu_radius(400, 2, 1.0, 0.5, 1.0, 1.0)
    # n^{1/6} growth at eps = 0.5
    core = (9 * 2) ** (1 / 1.5)
    assert (b2 / 3 - 1) / (b1 / 3 - 1) == pytest.approx((400 / 100) ** (1 / 6))
    assert b1 == pytest.approx(3 * (core * 100 ** (1 / 6) + 1))


def test_menu_estimates_match_dense_oracle():
    rng = np.random.default_rng(3)
    d, T = 3, 2000
    pol = MenuPolicy(d, c=3.0, epsilon=1.0, delta=0.1, lam=1.0, S=1.0, T=T)
    k = pol.k
    X, Y = [], []
    for _ in range(4):
        x = rng.uniform(0, 1, size=d)
        y = rng.normal(size=k)
        pol.update(x, y)
        X.append(x)
        Y.append(y)
    X, Y = np.array(X), np.array(Y)
    V = np.eye(d) + X.T @ X
    oracle = np.linalg.solve(V, X.T @ Y).T  # row j: V^{-1} sum_n y_{n,j} x_n
    np.testing.assert_allclose(pol.estimates, oracle, atol=1e-10)
    np.testing.assert_allclose(pol.ellipsoid.center, oracle[pol.k_star])
    assert pol.ellipsoid.beta == pytest.approx(menu_radius(4, d, 3.0, 1.0, 1.0, 1.0))


def test_menu_storage_is_k_sums():
    pol = MenuPolicy(2, 3.0, 1.0, 0.1, 1.0, 1.0, 5000)
    assert pol.group_sums.shape == (pol.k, 2)


def test_menu_wrong_payoff_count():
    pol = MenuPolicy(2, 3.0, 1.0, 0.1, 1.0, 1.0, 5000)
    with pytest.raises(InvalidInputError):
        pol.update([1.0, 0.0], np.zeros(pol.k - 1))
    with pytest.raises(InvalidInputError):
        pol.update([1.0, 0.0], np.full(pol.k, np.nan))


def test_certify_center_and_displacement():
    st_ = design(2, [[1.0, 0.2], [0.1, 1.0], [1.0, 1.0]])
    ell = ConfidenceEllipsoid(np.array([0.4, -0.3]), 0.8, st_)
    assert ell.contains(ell.center)
    w, Q = np.linalg.eigh(st_.V)
    v = Q[:, 0] / math.sqrt(w[0])  # unit V-norm along an eigenvector
    assert not ell.contains(ell.center + 2 * ell.beta * v)
    assert ell.contains(ell.center + 0.99 * ell.beta * v)


def test_menu_certify_hook():
    pol = MenuPolicy(2, 3.0, 1.0, 0.1, 1.0, 1.0, 5000)
    pol.update([1.0, 0.0], np.ones(pol.k))
    assert pol.certify(pol.ellipsoid.center)


# -- TOFU -------------------------------------------------------------------

def tofu_straight_line(arms, payoffs, threshold):
    """Truncated estimate evaluated at 50 digits, independently of the package."""
    mpmath.mp.dps = 50
    d = len(arms[0])
    V = mpmath.eye(d)
    for x in arms:
        xv = mpmath.matrix(x)
        V += xv * xv.T
    w, Q = mpmath.eigsy(V)
    M = Q * mpmath.diag([1 / mpmath.sqrt(v) for v in w]) * Q.T
    X = mpmath.matrix(arms)
    U = M * X.T
    z = mpmath.matrix(d, 1)
    clipped = 0
    for i in range(d):
        for tau, y in enumerate(payoffs):
            p = U[i, tau] * mpmath.mpf(y)
            if abs(p) <= threshold:
                z[i] += p
            else:
                clipped += 1
    return [float(v) for v in M * z], clipped


def test_tofu_handcrafted_clip():
    arms = [(1.0, 0.0), (1.0, 0.25), (0.0, 1.0)]
    ys = [1.0, 6.0, -0.5]
    b = 4 * math.log(2 * 2 * 3 / 0.1)  # makes b_t = 2 with eps = 1
    pol = TofuPolicy(2, b=b, epsilon=1.0, delta=0.1, lam=1.0, S=1.0, T=3)
    for x, y in zip(arms, ys):
        pol.update(x, [y])
    assert pol.last_threshold == pytest.approx(2.0)
    expected, clipped = tofu_straight_line(arms, ys, mpmath.mpf(2))
    assert clipped == 1 and pol.last_clipped == 1
    np.testing.assert_allclose(pol.ellipsoid.center, expected, atol=1e-13)


def test_tofu_no_clip_equals_ridge():
    rng = np.random.default_rng(4)
    X = rng.uniform(0, 1, size=(40, 3))
    y = rng.normal(size=40)
    pol = TofuPolicy(3, b=1e12, epsilon=0.5, delta=0.1, lam=1.0, S=1.0, T=40)
    for x, yy in zip(X, y):
        pol.update(x, [yy])
    assert pol.last_clipped == 0
    lse = np.linalg.solve(np.eye(3) + X.T @ X, X.T @ y)
    assert np.linalg.norm(pol.ellipsoid.center - lse) <= 1e-8


def test_tofu_single_huge_observation():
    pol = TofuPolicy(2, b=1.0, epsilon=0.5, delta=0.1, lam=1.0, S=1.0, T=10)
    pol.update([1.0, 1.0], [1e9])
    np.testing.assert_array_equal(pol.ellipsoid.center, [0.0, 0.0])
    assert pol.last_clipped == 2


def test_tofu_threshold_conventions():
    t, b, eps, d, T, delta = 50, 7.72, 0.5, 10, 10_000, 0.1
    proof = (b / math.log(2 * d * T / delta)) ** (1 / 1.5) * t ** (0.5 / 3)
    literal = (b / math.log(2 * T / delta)) ** (1 / 0.5) * t ** (0.5 / 3)
    assert tofu_threshold(t, b, eps, d, T, delta, "proof") == pytest.approx(proof)
    assert tofu_threshold(t, b, eps, d, T, delta, "literal") == pytest.approx(literal)
    with pytest.raises(ConfigError):
        tofu_threshold(t, b, eps, d, T, delta, "other")


def test_tofu_literal_is_one_sided():
    pol = TofuPolicy(1, b=1.0, epsilon=1.0, delta=0.1, lam=1.0, S=1.0, T=5, truncation_convention="literal")
    pol.update([1.0], [-1e6])
    assert pol.last_clipped == 0 and pol.ellipsoid.center[0] < 0


def test_tofu_radius_formula():
    beta = alg.tofu_radius(100, 7.72, 0.5, 10, 10_000, 0.1, 1.0, math.sqrt(10))
    # log(2 d T / delta) with d = 10, T = 1e4, delta = 0.1 is log(2e6)
    expected = 4 * math.sqrt(10) * 7.72 ** (1 / 1.5) * math.log(2e6) ** (1 / 3) * 100 ** (1 / 6) + math.sqrt(10)
    assert beta == pytest.approx(expected)


def test_tofu_rejects_unknown_convention():
    with pytest.raises(ConfigError):
        TofuPolicy(2, 1.0, 0.5, 0.1, 1.0, 1.0, 10, truncation_convention="loose")


# -- MoM and CRT ------------------------------------------------------------

def test_group_median_examples():
    assert group_median([2.5] * 12, 4) == 2.5
    assert group_median([0.0, 0.0, 0.0, 100.0], 2) == 0.0
    with pytest.raises(InvalidInputError):
        group_median([1.0], 2)


def test_mom_schedule_frozen():
    # ceil(20000^{1/2}) = 142 epochs of floor(20000/142) = 140 pulls; ceil(8 ln 2e5) = 98 groups
    assert mom_schedule(20_000, 1.0, 0.1) == (142, 140, 98)
    N, k, m = mom_schedule(10_000, 0.5, 0.1)
    assert N == math.ceil(10_000 ** (1 / 2.5)) and k == 10_000 // N and m == min(k, math.ceil(8 * math.log(1e5)))


def test_mom_schedule_bad_groups():
    with pytest.raises(ConfigError):
        mom_schedule(20_000, 1.0, 0.1, groups=1000)


def test_mom_policy_uses_medians():
    pol = MomPolicy(2, c=3.0, epsilon=1.0, delta=0.1, lam=1.0, S=1.0, T=20_000)
    y = np.full(pol.k, 0.5)
    y[:5] = 1e6  # a few wild payoffs land in a minority of groups
    pol.update([1.0, 0.0], y)
    assert pol.medians == [0.5]
    np.testing.assert_allclose(pol.ellipsoid.center, [0.25, 0.0])


def test_crt_truncation():
    pol = CrtPolicy(1, b=3.0, epsilon=1.0, delta=0.1, lam=1.0, S=1.0, T=100, D=1.0)
    B1 = pol.threshold(1)
    assert B1 == pytest.approx(math.sqrt(3.0 / math.log(2000)))
    pol.update([1.0], [0.5 * B1])
    assert pol.n_clipped == 0 and pol.s[0] == pytest.approx(0.5 * B1)
    pol.update([1.0], [10 * pol.threshold(2)])
    assert pol.n_clipped == 1 and pol.s[0] == pytest.approx(0.5 * B1)


def test_crt_radius_formula():
    beta = alg.crt_radius(10, 2.0, 1.0, 100, 0.1, 3, 1.5, 1.0, 2.0)
    core = 4 * math.sqrt(2.0) * math.sqrt(math.log(2000)) * math.sqrt(3 * math.log(1 + 10 * 2.25 / 3))
    assert beta == pytest.approx(core + 2.0)


# -- configuration ----------------------------------------------------------

def test_algo_config_validation():
    with pytest.raises(ConfigError):
        AlgoConfig("ucb")
    with pytest.raises(ConfigError):
        AlgoConfig("menu", lam=0.0)
    with pytest.raises(ConfigError):
        AlgoConfig("menu", delta=1.0)
    cfg = AlgoConfig.from_dict({"algo": "TOFU", "lambda": 2.0, "truncation-convention": "literal", "note": 1})
    assert cfg.algo == "tofu" and cfg.lam == 2.0 and cfg.truncation_convention == "literal"
    assert cfg.extra == {"note": 1}
    assert cfg.to_dict()["lambda"] == 2.0


@pytest.mark.parametrize("algo,ds", [("menu", "S1"), ("mom", "S2"), ("tofu", "S3"), ("crt", "S4")])
def test_make_policy_pulls(algo, ds):
    inst = generate_instance(ds, 0)
    T = 20_000 if ds in ("S1", "S2") else 10_000
    pol = make_policy(AlgoConfig(algo), inst, T)
    assert pol.n_decisions * pol.pulls <= T
    if algo in ("tofu", "crt"):
        assert pol.pulls == 1 and pol.n_decisions == T


def test_make_policy_needs_raw_bound():
    with pytest.raises(ConfigError):
        make_policy(AlgoConfig("tofu"), generate_instance("S1", 0), 100)
    pol = make_policy(AlgoConfig("tofu", moment_bound=5.0), generate_instance("S1", 0), 100)
    assert pol.b == 5.0


def test_make_policy_lower_bound_instance():
    inst = lower_bound_instance(2, 1.0, 10_000, 0).to_bandit()
    assert make_policy(AlgoConfig("menu"), inst, 10_000).c == 2.0


def test_radius_scale_and_center_override():
    inst = generate_instance("S1", 0)
    pol = make_policy(AlgoConfig("menu", radius_scale=0.0, center_override=list(inst.theta_star)), inst, 20_000)
    assert pol.select(inst.arms) == int(np.argmax(inst.means))
    pol.update(inst.arms[0], np.zeros(pol.k))
    assert pol.ellipsoid.beta == 0.0


@settings(max_examples=40, deadline=None)
@given(
    T=st.integers(400, 10**7),
    delta=st.floats(1e-4, 0.5),
)
def test_menu_schedule_properties(T, delta):
    if T < menu_min_horizon(delta):
        return
    k, N = menu_schedule(T, delta)
    assert k * N <= T < k * (N + 1)
    assert k >= 24 * math.log(math.e * T / delta)
