import sys

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.optimize import minimize

from levelcut.objectives import (
    Hartmann6,
    PBM_DIM,
    RandomLinear,
    Shekel4,
    SubprocessObjective,
    decode_features,
    encode_sequences,
    eval_batch,
    gen_linear_quadratic,
    gen_random_linear,
    gen_synthetic_pbm,
    hartmann6,
    load_pbm,
    shekel4,
)


class TestRandomLinear:
    def test_1d_minimum(self):
        obj = RandomLinear(w=np.array([1.0]))
        assert obj.evaluate(np.array([[-1.0]]))[0] == -1.0
        assert obj.min_value == -1.0

    def test_l1_minimum(self):
        obj = RandomLinear(w=np.array([0.6, 0.8]))
        assert obj.min_value == pytest.approx(-1.4)
        assert obj.evaluate(obj.argmin[None, :])[0] == pytest.approx(-1.4)

    def test_unit_norm_and_dimension(self, rng):
        obj = gen_random_linear(17, rng)
        assert obj.d == 17
        assert np.linalg.norm(obj.w) == pytest.approx(1.0)

    def test_dense_random_search_never_beats_sign_formula(self):
        # oracle: a million uniform samples stay above the closed-form minimum
        rng = np.random.default_rng(7)
        obj = gen_random_linear(300, rng)
        floor = obj.min_value
        best = np.inf
        for _ in range(50):
            X = rng.uniform(-1.0, 1.0, size=(20_000, 300))
            best = min(best, float(obj.evaluate(X).min()))
        assert best >= floor
        assert obj.evaluate(obj.argmin[None, :])[0] == pytest.approx(floor)


class TestLinearQuadratic:
    def test_mix_zero_reduces_to_linear(self, rng):
        obj = gen_linear_quadratic(8, 0.0, rng)
        X = rng.uniform(-1, 1, size=(50, 8))
        assert np.allclose(obj.evaluate(X), X @ obj.w)

    def test_quadratic_part_nonnegative(self, rng):
        obj = gen_linear_quadratic(6, 2.5, rng)
        X = rng.uniform(-1, 1, size=(200, 6))
        assert np.all(obj.quadratic_part(X) >= 0)

    def test_multistart_descent_oracle(self):
        # oracle: the best of 100 bounded quasi-Newton starts is the minimum;
        # dense random sampling never beats it
        rng = np.random.default_rng(3)
        obj = gen_linear_quadratic(10, 1.0, rng)
        bounds = [(-1.0, 1.0)] * 10

        def f(x):
            return float(obj.evaluate(x[None, :])[0])

        best = np.inf
        for _ in range(100):
            x0 = rng.uniform(-1, 1, size=10)
            res = minimize(f, x0, method="L-BFGS-B", bounds=bounds)
            best = min(best, float(res.fun))
        X = rng.uniform(-1, 1, size=(100_000, 10))
        assert obj.evaluate(X).min() >= best - 1e-9


# frozen oracle values: direct evaluation of the standard parameter tables,
# refined by local descent below
SHEKEL_AT_FOCUS = -10.536283726219605
HARTMANN6_MIN = -3.32237


class TestStandardBenchmarks:
    def test_shekel_at_focus(self):
        assert shekel4([4.0, 4.0, 4.0, 4.0]) == pytest.approx(SHEKEL_AT_FOCUS, abs=1e-9)

    def test_shekel_local_descent_refines_focus(self):
        res = minimize(
            lambda x: shekel4(x),
            np.array([4.0, 4.0, 4.0, 4.0]),
            method="Nelder-Mead",
            options={"xatol": 1e-10, "fatol": 1e-12, "maxiter": 5000},
        )
        assert res.fun == pytest.approx(-10.5364, abs=1e-3)
        assert res.fun <= SHEKEL_AT_FOCUS

    def test_shekel_far_corner_close_to_zero_from_below(self):
        v = shekel4([10.0, 10.0, 10.0, 10.0])
        assert -0.5 < v < 0.0

    def test_shekel_domain_error(self):
        with pytest.raises(ValueError, match="domain"):
            shekel4([11.0, 0.0, 0.0, 0.0])

    def test_hartmann_global_minimum(self):
        # oracle: dense random search plus local descent
        rng = np.random.default_rng(11)
        X = rng.uniform(0, 1, size=(200_000, 6))
        vals = Hartmann6().evaluate(X)
        x0 = X[np.argmin(vals)]
        res = minimize(
            lambda x: hartmann6(np.clip(x, 0, 1)),
            x0,
            method="Nelder-Mead",
            options={"xatol": 1e-10, "fatol": 1e-12, "maxiter": 5000},
        )
        assert res.fun == pytest.approx(HARTMANN6_MIN, abs=2e-3)

    def test_hartmann_domain_error(self):
        with pytest.raises(ValueError, match="domain"):
            hartmann6([1.5, 0, 0, 0, 0, 0])


class TestPbmEncoding:
    def test_all_a_sequence(self):
        feats = encode_sequences(["AAAAAAAA"])[0]
        expected = np.zeros(PBM_DIM)
        expected[np.arange(8) * 4] = 1.0  # the A slot of each position
        assert np.array_equal(feats, expected)

    def test_invalid_base_rejected(self):
        with pytest.raises(ValueError, match="invalid base"):
            encode_sequences(["AAAAAAAX"])

    @given(st.lists(st.sampled_from("ACGT"), min_size=8, max_size=8))
    @settings(max_examples=50)
    def test_encoding_roundtrips(self, bases):
        seq = "".join(bases)
        assert decode_features(encode_sequences([seq]))[0] == seq


class TestPbmLoading:
    def _write(self, tmp_path, text):
        path = tmp_path / "pbm.tsv"
        path.write_text(text, encoding="utf-8")
        return path

    def test_load_with_header(self, tmp_path):
        path = self._write(tmp_path, "seq\taffinity\nAAAAAAAA\t1.5\nACGTACGT\t0.25\n")
        prob = load_pbm(path)
        assert prob.n == 2
        assert prob.objective().evaluate(encode_sequences(["AAAAAAAA"]))[0] == -1.5

    def test_duplicate_sequence_rejected(self, tmp_path):
        path = self._write(tmp_path, "AAAAAAAA\t1.0\nAAAAAAAA\t2.0\n")
        with pytest.raises(ValueError, match="duplicate action"):
            load_pbm(path)

    def test_invalid_base_reports_line(self, tmp_path):
        path = self._write(tmp_path, "AAAAAAAA\t1.0\nAAAAAAAX\t1.2\n")
        with pytest.raises(ValueError, match="line 2"):
            load_pbm(path)

    def test_non_numeric_affinity_reports_line(self, tmp_path):
        path = self._write(tmp_path, "AAAAAAAA\t1.0\nCCCCCCCC\tbad\n")
        with pytest.raises(ValueError, match="line 2"):
            load_pbm(path)


class TestSyntheticPbm:
    def test_full_enumeration(self):
        prob = gen_synthetic_pbm(np.random.default_rng(0))
        assert prob.n == 4**8
        assert len(set(prob.sequences)) == prob.n

    def test_zero_noise_argmax_is_positionwise(self):
        prob = gen_synthetic_pbm(np.random.default_rng(1), noise_scale=0.0)
        best = prob.sequences[int(np.argmax(prob.affinities))]
        table = dict(zip(prob.sequences, prob.affinities))
        # separable landscape: no single-base change can improve the argmax
        for pos in range(8):
            for base in "ACGT":
                mutant = best[:pos] + base + best[pos + 1 :]
                assert table[mutant] <= table[best] + 1e-12

    def test_exhaustive_scan_identifies_optimum(self):
        prob = gen_synthetic_pbm(np.random.default_rng(2))
        vals = prob.objective_values()
        i = int(np.argmin(vals))
        feats = prob.features[i : i + 1]
        assert prob.objective().evaluate(feats)[0] == vals[i]


class TestEvalBatch:
    def test_linear_values(self):
        obj = RandomLinear(w=np.array([1.0, 0.0]))
        out = eval_batch(obj, np.array([[1.0, 1.0], [-1.0, 0.0]]))
        assert out.tolist() == [1.0, -1.0]

    def test_pbm_lookup(self):
        prob = gen_synthetic_pbm(np.random.default_rng(3))
        idx = 123
        out = eval_batch(prob.objective(), prob.features[idx : idx + 1])
        assert out[0] == -prob.affinities[idx]

    def test_domain_violation(self):
        obj = RandomLinear(w=np.array([1.0]))
        with pytest.raises(ValueError, match="domain"):
            eval_batch(obj, np.array([[2.0]]))


class TestSubprocessObjective:
    def _echo_zero(self):
        script = "import sys\nfor _ in sys.stdin:\n    print('0.0')\n"
        return SubprocessObjective(argv=(sys.executable, "-c", script), d=2)

    def test_echo_zero_per_line(self):
        obj = self._echo_zero()
        out = eval_batch(obj, np.array([[0.5, 0.5], [1.0, -1.0], [0.0, 0.0]]))
        assert out.tolist() == [0.0, 0.0, 0.0]

    def test_identity_sum(self):
        script = (
            "import sys\n"
            "for line in sys.stdin:\n"
            "    print(sum(float(v) for v in line.split()))\n"
        )
        obj = SubprocessObjective(argv=(sys.executable, "-c", script), d=3)
        out = obj.evaluate(np.array([[1.0, 2.0, 3.0], [0.5, 0.25, 0.0]]))
        assert np.allclose(out, [6.0, 0.75])

    def test_nonzero_exit_substitutes_error_value(self):
        obj = SubprocessObjective(
            argv=(sys.executable, "-c", "import sys; sys.exit(1)"),
            d=2,
            error_value=-7.5,
        )
        out = obj.evaluate(np.zeros((3, 2)))
        assert out.tolist() == [-7.5, -7.5, -7.5]

    def test_unparseable_line_substitutes_error_value(self):
        script = (
            "import sys\n"
            "lines = sys.stdin.readlines()\n"
            "print('oops')\n"
            "for _ in lines[1:]:\n"
            "    print('1.0')\n"
        )
        obj = SubprocessObjective(
            argv=(sys.executable, "-c", script), d=2, error_value=9.0
        )
        out = obj.evaluate(np.zeros((3, 2)))
        assert out.tolist() == [9.0, 1.0, 1.0]
