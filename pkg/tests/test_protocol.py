import csv
import json
import math

import numpy as np
import pytest
from scipy import stats

from kljn import CorrSignDistinguisher, ResistorPair, WireTrace, explicit_assignment, johnson_scaling, simulate_state
from kljn.protocol import (
    PeriodCapExceeded,
    SessionConfig,
    classify_r_sum,
    johnson_session_assignment,
    run_key_exchange,
)


C = 1e-4
# measured: 2 misclassified HH periods out of 10^4 at n=256 (seeds 0..9999);
# chi-square oracle predicts 1.7e-4 per period
HH_256_MEASURED_ERRORS = 2


@pytest.fixture
def secure(pair):
    return johnson_session_assignment(pair, "gaussian", C)


def chi2_error(n, centre_ratio):
    """P(sample variance crosses a log-midpoint at ``centre_ratio`` times the true variance)."""
    thr = math.sqrt(centre_ratio)
    if thr > 1:
        return stats.chi2.sf((n - 1) * thr, n - 1)
    return stats.chi2.cdf((n - 1) * thr, n - 1)


class TestConfig:
    def test_thermal_constant_consistency(self, pair):
        with pytest.raises(ValueError, match="inconsistent"):
            SessionConfig(pair, johnson_scaling(pair, "gaussian", 2.0), C, 8)
        SessionConfig(pair, johnson_scaling(pair, "gaussian", math.sqrt(C * pair.r_high)), C, 8)

    def test_rejects_stable(self, pair):
        with pytest.raises(ValueError, match="finite-variance"):
            SessionConfig(pair, johnson_scaling(pair, "stable", 1.0, alpha=1.5), C, 8)

    def test_rejects_degenerate_pair(self, secure):
        with pytest.raises(ValueError):
            SessionConfig(ResistorPair.degenerate_pair(1e3), secure, C, 8)

    @pytest.mark.parametrize("field,value", [("bits_requested", 0), ("samples_per_bit", 255), ("thermal_constant", 0.0)])
    def test_rejects_bad_counts(self, pair, secure, field, value):
        kw = dict(pair=pair, assignment=secure, thermal_constant=C, bits_requested=8)
        kw[field] = value
        with pytest.raises(ValueError):
            SessionConfig(**kw)

    def test_uniform_session_assignment(self, pair):
        asg = johnson_session_assignment(pair, "uniform", C)
        assert asg.high.variance == pytest.approx(C * pair.r_high, rel=1e-14)


class TestClassifyRSum:
    def test_exact_centre(self, pair):
        # +-s alternating gives population variance s^2 exactly; ddof=1 adds n/(n-1)
        n = 256
        s = math.sqrt(C / (2 * pair.r_low) * (n - 1) / n)
        i = np.tile([s, -s], n // 2)
        assert classify_r_sum(WireTrace(np.zeros(n), i), pair, C) == "LL"

    def test_short_trace(self, pair, secure):
        with pytest.raises(ValueError):
            classify_r_sum(simulate_state("LH", pair, secure, 255, 0), pair, C)

    def test_oracle_mixed_n4096(self, pair):
        p = chi2_error(4096, (pair.r_low + pair.r_high) / (2 * pair.r_high)) + chi2_error(
            4096, (pair.r_low + pair.r_high) / (2 * pair.r_low)
        )
        assert p < 1e-6

    @pytest.mark.slow
    def test_mixed_n4096_empirical(self, pair, secure):
        errors = sum(classify_r_sum(simulate_state("LH", pair, secure, 4096, s), pair, C) != "mixed" for s in range(10**4))
        assert errors == 0

    @pytest.mark.slow
    def test_hh_n256_measured(self, pair, secure):
        errors = sum(classify_r_sum(simulate_state("HH", pair, secure, 256, s), pair, C) != "HH" for s in range(10**4))
        assert errors == HH_256_MEASURED_ERRORS
        expected = 10**4 * chi2_error(256, 2 * pair.r_high / (pair.r_low + pair.r_high))
        assert errors <= stats.poisson.ppf(0.999, expected)


class TestSession:
    def test_secure_session(self, pair, secure):
        res = run_key_exchange(SessionConfig(pair, secure, C, 128, 4096, 1, CorrSignDistinguisher()))
        assert res.kept_periods == len(res.alice_key) == len(res.bob_key) == 128
        assert res.agreement_rate == 1.0 and res.party_inference_errors == 0
        assert res.discarded_periods + res.kept_periods + res.inference_drops == res.total_periods
        assert 0 <= res.eve_accuracy <= 1

    def test_key_correctness_follows_levels(self, pair, secure):
        res = run_key_exchange(SessionConfig(pair, secure, C, 32, 1024, 2))
        kept = [p for p in res.periods if p.kept]
        assert [p.bit for p in kept] == [int(p.alice_level == "H") for p in kept]
        assert all(p.alice_level != p.bob_level for p in kept)
        assert res.eve_accuracy is None and res.eve_bit_guesses is None

    def test_reproducible(self, pair, secure):
        cfg = SessionConfig(pair, secure, C, 16, 512, 3, CorrSignDistinguisher())
        assert run_key_exchange(cfg).to_json() == run_key_exchange(cfg).to_json()

    def test_period_cap(self, pair, secure, monkeypatch):
        import kljn.protocol as protocol

        # every period looks same-level to both parties
        monkeypatch.setattr(protocol, "_infer_other", lambda config, own, var_i: own)
        with pytest.raises(PeriodCapExceeded, match="after 16 periods"):
            run_key_exchange(SessionConfig(pair, secure, C, 4, 256, 4))

    def test_json_and_periods_csv(self, tmp_path, pair, secure):
        res = run_key_exchange(SessionConfig(pair, secure, C, 16, 512, 5, CorrSignDistinguisher()))
        d = json.loads(res.to_json())
        assert len(bytes.fromhex(d["alice_key_hex"])) == 2
        assert d["alice_key_hex"] == d["bob_key_hex"]
        path = tmp_path / "p.csv"
        res.write_periods_csv(path)
        rows = list(csv.DictReader(path.open()))
        assert list(rows[0]) == ["period", "alice_level", "bob_level", "kept", "bit", "eve_guess"]
        assert len(rows) == res.total_periods
        assert sum(r["kept"] == "1" for r in rows) == 16

    def test_misscaled_eve_wins(self, pair):
        cfg = SessionConfig(pair, explicit_assignment("gaussian", 1.0, 1.5), C, 128, 4096, 6, CorrSignDistinguisher())
        res = run_key_exchange(cfg)
        assert res.agreement_rate == 1.0
        assert res.eve_accuracy >= 0.95

    @pytest.mark.slow
    def test_information_split(self, pair, secure):
        # Eve's r_sum classification and the parties' inference read the same statistic
        res = run_key_exchange(SessionConfig(pair, secure, C, 400, 256, 7))
        truth = ["mixed" if p.alice_level != p.bob_level else p.alice_level * 2 for p in res.periods]
        eve_errors = sum(t != e for t, e in zip(truth, res.eve_state_classification))
        hi = stats.poisson.ppf(0.999, max(1.0, res.party_inference_errors))
        assert eve_errors <= hi and res.party_inference_errors <= stats.poisson.ppf(0.999, max(1.0, eve_errors))
