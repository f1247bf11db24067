import numpy as np
import pytest

from museq.errors import ConfigError
from museq.kiosk import KioskFleet, min_kiosks, simulate_kiosk_queue, worst_case_wait


class TestWorstCaseWait:
    def test_peak_batch_with_seven_kiosks(self):
        # floor(267/7) * 15 = 570 seconds, under the ten-minute bound
        assert worst_case_wait(268, KioskFleet(7, 15.0)) == 570.0

    def test_peak_batch_with_six_kiosks(self):
        # floor(267/6) * 15 = 660 seconds, over the bound
        assert worst_case_wait(268, KioskFleet(6, 15.0)) == 660.0

    def test_single_arrival_never_waits(self):
        for k in (1, 3, 9):
            assert worst_case_wait(1, KioskFleet(k, 42.0)) == 0.0

    def test_nonpositive_arrivals_rejected(self):
        with pytest.raises(ConfigError):
            worst_case_wait(0, KioskFleet(1, 15.0))


class TestMinKiosks:
    def test_paper_sizing(self):
        assert min_kiosks(268, 15.0, 600.0) == 7

    def test_looser_bound_allows_six(self):
        assert min_kiosks(268, 15.0, 660.0) == 6

    def test_single_person_zero_wait(self):
        assert min_kiosks(1, 15.0, 0.0) == 1

    def test_result_is_minimal(self):
        for arrivals in (2, 50, 268, 903):
            for wait in (0.0, 120.0, 600.0):
                k = min_kiosks(arrivals, 15.0, wait)
                assert worst_case_wait(arrivals, KioskFleet(k, 15.0)) <= wait
                if k > 1:
                    assert (
                        worst_case_wait(arrivals, KioskFleet(k - 1, 15.0)) > wait
                    )

    def test_monotone_in_bound_and_arrivals(self):
        waits = (0.0, 60.0, 300.0, 900.0)
        for lo, hi in zip(waits, waits[1:]):
            assert min_kiosks(268, 15.0, hi) <= min_kiosks(268, 15.0, lo)
        arrivals = (10, 100, 268, 500)
        for lo, hi in zip(arrivals, arrivals[1:]):
            assert min_kiosks(hi, 15.0, 300.0) >= min_kiosks(lo, 15.0, 300.0)
        assert min_kiosks(268, 30.0, 300.0) >= min_kiosks(268, 15.0, 300.0)


class TestSimulation:
    def test_batch_matches_closed_form(self):
        waits, summary = simulate_kiosk_queue([0.0] * 268, KioskFleet(7, 15.0))
        assert summary["max"] == worst_case_wait(268, KioskFleet(7, 15.0))

    def test_closed_form_agreement_grid(self):
        for arrivals in list(range(1, 40)) + [100, 268, 500, 1000]:
            for k in (1, 2, 3, 7, 13, 20):
                fleet = KioskFleet(k, 15.0)
                _, summary = simulate_kiosk_queue([0.0] * arrivals, fleet)
                assert summary["max"] == worst_case_wait(arrivals, fleet)

    def test_spaced_arrivals_never_wait(self):
        arrivals = [15.0 * i for i in range(20)]
        waits, summary = simulate_kiosk_queue(arrivals, KioskFleet(1, 15.0))
        assert summary["max"] == 0.0

    def test_adding_a_server_never_hurts(self, rng):
        times = np.sort(rng.uniform(0, 600, 200)).tolist()
        for k in range(1, 6):
            _, small = simulate_kiosk_queue(times, KioskFleet(k, 15.0))
            _, big = simulate_kiosk_queue(times, KioskFleet(k + 1, 15.0))
            assert big["max"] <= small["max"]
            assert big["mean"] <= small["mean"] + 1e-12

    def test_unsorted_input_rejected(self):
        with pytest.raises(ConfigError):
            simulate_kiosk_queue([5.0, 1.0], KioskFleet(2, 15.0))

    def test_waits_nonnegative(self, rng):
        times = np.sort(rng.uniform(0, 100, 50)).tolist()
        waits, _ = simulate_kiosk_queue(times, KioskFleet(3, 15.0))
        assert all(w >= 0 for w in waits)
