import numpy as np
import pytest

from eigennet.consensus import AcConfig, ErrorInjectingEngine, ReplayEngine, run_consensus
from eigennet.distributed import (
    audit_messages,
    check_dpm_convergence_condition,
    default_dla_start,
    default_dpm_start,
    make_convergence_trace,
    matrix_error_for_drift,
    predict_dla_w_error,
    predict_dpm_vector_error,
    predict_lambda1_error,
    run_dla,
    run_dpm,
)
from eigennet.eigencore import (
    EigenSolution,
    lanczos,
    power_method,
    sample_covariance,
    tridiagonal_eigenvalues,
)
from eigennet.errors import AuditMismatch, DegenerateRunError
from eigennet.signals import samples_with_spectrum
from eigennet.topology import Graph, metropolis_weights, spectral_bounds

from conftest import random_connected_graph, random_samples

IDEAL = AcConfig("ideal", 0)


def dpm_injection(k, n, m, scale, seed, *, scalar_scale=None):
    rng = np.random.default_rng(seed)
    errors = [
        scale * (rng.standard_normal((k, n)) + 1j * rng.standard_normal((k, n)))
        for _ in range(m + 1)
    ]
    errors.append((scalar_scale if scalar_scale is not None else scale) * rng.standard_normal(k))
    return ErrorInjectingEngine(errors)


def dla_injection(k, n, m, mat_scale, scalar_scale, seed):
    rng = np.random.default_rng(seed)
    errors = []
    for _ in range(m):
        errors.append(
            mat_scale * (rng.standard_normal((k, n)) + 1j * rng.standard_normal((k, n)))
        )
        errors.append(scalar_scale * rng.standard_normal(k))
    return ErrorInjectingEngine(errors)


class TestIdealEquivalence:
    @pytest.mark.parametrize("seed", range(3))
    def test_dpm_matches_centralized(self, seed):
        y = random_samples(6, 5, seed)
        r = sample_covariance(y)
        v0 = default_dpm_start(6, seed)
        res = run_dpm(y, IDEAL, 4, v0)
        ref = power_method(r, v0, 4)
        assert np.max(np.abs(res.lambda1 - ref.value)) <= 1e-12 * abs(ref.value)
        assert np.ptp(res.lambda1) == 0.0  # all nodes identical under exact consensus
        rel = np.max(np.abs(res.v_hist[4] - ref.vector)) / np.max(np.abs(ref.vector))
        assert rel <= 1e-12

    @pytest.mark.parametrize("seed", range(3))
    def test_dla_matches_centralized(self, seed):
        y = random_samples(7, 6, seed)
        r = sample_covariance(y)
        v1 = default_dla_start(7)
        m = 5
        res = run_dla(y, IDEAL, m, v1)
        ref = lanczos(r, v1, m)
        scale = max(np.max(np.abs(ref.alpha)), 1.0)
        assert np.max(np.abs(res.alpha_hist - ref.alpha[:, None])) <= 1e-12 * scale
        assert np.max(np.abs(res.beta_hist[: m - 1] - ref.beta[:, None])) <= 1e-12 * scale
        lam_ref = tridiagonal_eigenvalues(ref)
        for k in range(7):
            assert np.max(np.abs(res.ritz_raw[m][k] - lam_ref)) <= 1e-10 * lam_ref[0]

    def test_two_node_complete_graph_one_step_standard(self):
        # one-step-exact consensus makes the standard engine match exactly
        g = Graph(2, ((0, 1),))
        w = metropolis_weights(g)
        y = random_samples(2, 4, 0)
        v0 = default_dpm_start(2, 0)
        res = run_dpm(y, AcConfig("standard", 1, weights=w), 3, v0)
        ref = power_method(sample_covariance(y), v0, 3)
        assert np.max(np.abs(res.lambda1 - ref.value)) <= 1e-12 * abs(ref.value)

    def test_dla_breakdown_matches_centralized_truncation(self):
        y = 2.0 * np.eye(4)  # covariance is a scaled identity
        res = run_dla(y, IDEAL, 3, default_dla_start(4))
        assert np.all(res.sizes == 1)
        t0 = res.tridiagonal(0)
        assert t0.invariant_subspace
        assert t0.alpha == pytest.approx([1.0])


class TestRunValidation:
    def test_rejects_zero_start(self):
        with pytest.raises(ValueError):
            run_dpm(random_samples(3, 3, 0), IDEAL, 2, np.zeros(3))

    def test_rejects_bad_checkpoint(self):
        with pytest.raises(ValueError):
            run_dpm(random_samples(3, 3, 0), IDEAL, 2, checkpoints=(5,))

    def test_dla_start_norm_enforced(self):
        with pytest.raises(ValueError):
            run_dla(random_samples(3, 3, 0), IDEAL, 2, np.ones(3))

    def test_dla_iteration_bound(self):
        with pytest.raises(ValueError):
            run_dla(random_samples(3, 3, 0), IDEAL, 4)

    def test_degenerate_denominator(self):
        y = random_samples(3, 4, 1)

        def make(idx, z0):
            if z0.ndim == 1:
                return -z0.mean() * np.ones(3)  # forces the scalar output to zero
            return np.zeros_like(z0)

        with pytest.raises(DegenerateRunError):
            run_dpm(y, ErrorInjectingEngine(make), 2)


class TestErrorPredictions:
    def test_zero_errors_reduce_to_matrix_powers(self):
        y = random_samples(5, 4, 2)
        r = sample_covariance(y)
        v0 = default_dpm_start(5, 2)
        res = run_dpm(y, IDEAL, 3, v0)
        pred = predict_dpm_vector_error(res.trace, r, v0, 3)
        want = np.linalg.matrix_power(r, 3) @ v0
        assert np.max(np.abs(pred - want)) <= 1e-12 * np.max(np.abs(want))
        e_num, e_den, lam = predict_lambda1_error(res.trace, y, res.v_hist[3])
        assert np.max(np.abs(e_num)) < 1e-12
        assert np.max(np.abs(e_den)) < 1e-12
        assert np.max(np.abs(lam - res.lambda1)) <= 1e-12 * np.max(np.abs(res.lambda1))

    def test_single_iteration_single_error(self):
        y = random_samples(4, 5, 3)
        r = sample_covariance(y)
        v0 = default_dpm_start(4, 3)
        rng = np.random.default_rng(0)
        e1 = 0.05 * (rng.standard_normal((4, 5)) + 1j * rng.standard_normal((4, 5)))
        eng = ErrorInjectingEngine([e1, np.zeros((4, 5)), np.zeros(4)])
        res = run_dpm(y, eng, 1, v0)
        drift = (4 / 5) * np.einsum("kn,kn->k", res.trace.iteration_errors[0].conj(), y)
        want = r @ v0 + drift
        assert np.max(np.abs(res.v_hist[1] - want)) <= 1e-12 * np.max(np.abs(want))

    @pytest.mark.parametrize("seed", range(3))
    def test_random_errors_reconstruct(self, seed):
        k, n, m = 6, 4, 5
        y = random_samples(k, n, seed)
        r = sample_covariance(y)
        v0 = default_dpm_start(k, seed)
        res = run_dpm(y, dpm_injection(k, n, m, 0.02, seed), m, v0)
        pred = predict_dpm_vector_error(res.trace, r, v0, m)
        rel = np.max(np.abs(pred - res.v_hist[m])) / np.max(np.abs(res.v_hist[m]))
        assert rel <= 1e-10

    def test_lambda1_reconstruction_each_error_alone(self):
        k, n, m = 5, 6, 3
        y = random_samples(k, n, 4)
        for which in ("matrix", "scalar"):
            rng = np.random.default_rng(11)
            errors = [np.zeros((k, n), dtype=complex) for _ in range(m)]
            if which == "matrix":
                errors.append(
                    0.1 * (rng.standard_normal((k, n)) + 1j * rng.standard_normal((k, n)))
                )
                errors.append(np.zeros(k))
            else:
                errors.append(np.zeros((k, n), dtype=complex))
                errors.append(0.1 * rng.standard_normal(k))
            res = run_dpm(y, ErrorInjectingEngine(errors), m, default_dpm_start(k, 4))
            _, _, lam = predict_lambda1_error(res.trace, y, res.v_hist[m])
            rel = np.max(np.abs(lam - res.lambda1)) / np.max(np.abs(res.lambda1))
            assert rel <= 1e-12

    def test_dla_w_prediction_zero_errors(self):
        y = random_samples(5, 5, 6)
        res = run_dla(y, IDEAL, 4)
        assert np.max(np.abs(res.trace.w_error_measured)) < 1e-10
        assert np.max(np.abs(res.trace.w_error_predicted)) < 1e-30

    def test_dla_w_prediction_matrix_errors_exact(self):
        k, n, m = 6, 5, 4
        y = random_samples(k, n, 7)
        res = run_dla(y, dla_injection(k, n, m, 1e-2, 0.0, 1), m)
        resid = np.abs(res.trace.w_error_measured - res.trace.w_error_predicted)
        assert np.max(resid) <= 1e-10

    def test_dla_w_prediction_second_order_in_scalar_error(self):
        k, n, m = 6, 5, 4
        y = random_samples(k, n, 8)

        def residual(eps):
            res = run_dla(y, dla_injection(k, n, m, eps, eps, 2), m)
            return np.max(np.abs(res.trace.w_error_measured - res.trace.w_error_predicted))

        ratio = residual(1e-3) / residual(5e-4)
        assert 3.0 <= ratio <= 5.0

    def test_predict_dla_w_error_matches_trace(self):
        k, n, m = 5, 4, 3
        y = random_samples(k, n, 9)
        res = run_dla(y, dla_injection(k, n, m, 1e-3, 1e-3, 3), m)
        for j in range(1, m + 1):
            pred = predict_dla_w_error(res.trace, y, res, j)
            assert np.allclose(pred, res.trace.w_error_predicted[j - 1], atol=1e-14)


class TestDlaRobustness:
    def test_negative_scalar_consensus_clamped(self):
        k, n, m = 4, 4, 2
        y = random_samples(k, n, 10)

        def errors(idx, z0):
            if z0.ndim == 1:
                return -(z0.mean() + 1.0) * np.ones(k)  # drives the output negative
            return np.zeros_like(z0)

        res = run_dla(y, ErrorInjectingEngine(errors), m)
        assert res.clamped.any()
        assert np.all(res.beta_hist >= 0.0)
        assert np.all(res.sizes >= 1)

    def test_taylor_flag_on_large_scalar_error(self):
        k, n, m = 4, 5, 3
        y = random_samples(k, n, 11)
        res = run_dla(y, dla_injection(k, n, m, 0.0, 50.0, 4), m)
        assert res.trace.taylor_flags.any()

    def test_beta_nonnegative_under_ideal(self):
        y = random_samples(6, 6, 12)
        res = run_dla(y, IDEAL, 5)
        ref = lanczos(sample_covariance(y), default_dla_start(6), 5)
        assert np.all(res.beta_hist >= 0)
        assert np.allclose(res.beta_hist[:4, 0], ref.beta, atol=1e-12 * max(ref.alpha))


class TestLocality:
    class _Recorder:
        def __init__(self, cfg):
            self.cfg = cfg
            self.outputs = []

        def run(self, z0):
            res = run_consensus(z0, self.cfg)
            self.outputs.append(res.z.copy())
            return res

    @pytest.mark.parametrize("algorithm", ["dpm", "dla"])
    def test_other_rows_only_enter_through_consensus(self, algorithm):
        g = random_connected_graph(5, 0)
        w = metropolis_weights(g)
        y = random_samples(5, 4, 13)
        rec = self._Recorder(AcConfig("standard", 3, weights=w))
        if algorithm == "dpm":
            ref = run_dpm(y, rec, 3, default_dpm_start(5, 1))
        else:
            ref = run_dla(y, rec, 3, default_dla_start(5))
        y_perturbed = y.copy()
        y_perturbed[2] += 1.0 - 0.5j  # node 2 changes; replay freezes consensus
        replay = ReplayEngine(rec.outputs)
        if algorithm == "dpm":
            res = run_dpm(y_perturbed, replay, 3, default_dpm_start(5, 1))
            same = [k for k in range(5) if k != 2]
            assert np.array_equal(res.v_hist[:, same], ref.v_hist[:, same])
            assert np.array_equal(res.lambda1[same], ref.lambda1[same])
            assert not np.array_equal(res.v_hist[:, 2], ref.v_hist[:, 2])
        else:
            res = run_dla(y_perturbed, replay, 3, default_dla_start(5))
            same = [k for k in range(5) if k != 2]
            assert np.array_equal(res.alpha_hist[:, same], ref.alpha_hist[:, same])
            assert np.array_equal(res.w_hist[:, same], ref.w_hist[:, same])
            assert not np.array_equal(res.w_hist[:, 2], ref.w_hist[:, 2])


class TestConvergenceCondition:
    def test_zero_errors_classical_rate(self):
        lam = np.array([3.0, 1.5, 0.8, 0.4])
        y, (values, vectors) = samples_with_spectrum(lam, seed=5)
        oracle = EigenSolution(values, vectors)
        rng = np.random.default_rng(0)
        v0 = vectors[:, 0] + 0.3 * vectors[:, 1] + 0.1 * vectors[:, 2]
        m = 25
        res = run_dpm(y, IDEAL, m, v0)
        trace = make_convergence_trace(res, oracle)
        verdict = check_dpm_convergence_condition(trace, oracle, m)
        assert verdict.condition_satisfied
        # classical decay bound with the start's eigen-expansion constant
        a = vectors.conj().T @ v0
        c = np.linalg.norm(a[1:]) / abs(a[0])
        assert trace.sin_theta[m] <= c * (values[1] / values[0]) ** m * (1 + 1e-9)

    def test_precondition_requires_large_top_eigenvalue(self):
        lam = np.array([0.9, 0.5, 0.1])
        y, (values, vectors) = samples_with_spectrum(lam, seed=6)
        oracle = EigenSolution(values, vectors)
        res = run_dpm(y, IDEAL, 3, vectors[:, 0])
        trace = make_convergence_trace(res, oracle)
        with pytest.raises(ValueError):
            check_dpm_convergence_condition(trace, oracle, 3)

    def test_drift_helper_hits_target(self):
        y = random_samples(5, 5, 14)
        target = np.array([0.1, -0.2, 0.05, 0.0, 0.3]) + 0.1j
        err = matrix_error_for_drift(y, target)
        drift = (1.0) * np.einsum("kn,kn->k", err.conj(), y) * (5 / 5)
        assert np.allclose(drift, target, atol=1e-12)


class TestAudit:
    def test_hand_formula_example(self):
        # a degree-3 node exchanging I(MN + N + 1)d units: 30*(50+10+1)*3 = 5490
        g = Graph(5, ((0, 1), (0, 2), (0, 3), (1, 2), (2, 3), (3, 4)))
        w = metropolis_weights(g)
        y = random_samples(5, 10, 15)
        ac = AcConfig("standard", 30, weights=w)
        res = run_dpm(y, ac, 5, default_dpm_start(5, 0))
        audit = audit_messages(res)
        assert audit.ac_n_calls == 6
        assert audit.ac_1_calls == 1
        assert audit.time_periods == 7
        assert audit.units_per_node[0] == 5490  # node 0 has degree 3
        # Lanczos counterpart: 30*(50+5)*3 = 4950
        res_l = run_dla(y, ac, 5, default_dla_start(5))
        audit_l = audit_messages(res_l)
        assert audit_l.ac_n_calls == 5
        assert audit_l.ac_1_calls == 5
        assert audit_l.time_periods == 10
        assert audit_l.units_per_node[0] == 4950

    def test_single_iteration_counts(self):
        g = Graph(3, ((0, 1), (1, 2)))
        w = metropolis_weights(g)
        res = run_dpm(random_samples(3, 4, 16), AcConfig("standard", 2, weights=w), 1)
        assert res.audit.ac_n_calls == 2
        assert res.audit.ac_1_calls == 1

    def test_checkpointed_run_fails_audit(self):
        g = Graph(3, ((0, 1), (1, 2)))
        w = metropolis_weights(g)
        res = run_dpm(
            random_samples(3, 4, 17), AcConfig("standard", 2, weights=w), 3,
            checkpoints=(1,),
        )
        with pytest.raises(AuditMismatch):
            audit_messages(res)

    def test_synthetic_engine_not_auditable(self):
        res = run_dpm(random_samples(3, 4, 18), IDEAL, 2)
        with pytest.raises(ValueError):
            audit_messages(res)


class TestDeterminismAndState:
    def test_repeat_runs_bit_identical(self):
        g = random_connected_graph(6, 1)
        w = metropolis_weights(g)
        cp = spectral_bounds(w)
        y = random_samples(6, 5, 19)

        def once():
            ac = AcConfig(
                "chebyshev", 8, weights=w, cheb=cp,
                link_failure_prob=0.2, failure_seed=5,
            )
            return run_dpm(y, ac, 4, default_dpm_start(6, 2))

        a, b = once(), once()
        assert np.array_equal(a.lambda1, b.lambda1)
        assert np.array_equal(a.v_hist, b.v_hist)

    def test_node_state_contents(self):
        y = random_samples(4, 5, 20)
        res = run_dla(y, IDEAL, 3)
        st = res.node_state(2)
        assert st.node == 2
        assert np.array_equal(st.samples, y[2])
        assert st.beta_hist[0] == 0.0
        assert len(st.alpha_hist) == 3
        assert len(st.lambda_est) == len(res.eigenvalues[3][2])

    def test_dpm_node_state(self):
        y = random_samples(4, 5, 21)
        res = run_dpm(y, IDEAL, 2)
        st = res.node_state(1)
        assert st.v_cur == res.v_hist[2, 1]
        assert st.lambda_est[0] == res.lambda1[1]
