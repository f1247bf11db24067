import csv
import importlib.resources

import numpy as np
import pytest

from museq.errors import ConfigError, EmptyInputError
from museq.noshow import (
    NoShowModel,
    TicketRecord,
    daily_noshow_rate,
    daily_rate_from_counts,
    fit_noshow,
    overbooking_limit,
    predict_noshow,
)


def table3_rows():
    path = importlib.resources.files("museq") / "data" / "table3_noshow.csv"
    with path.open("r", encoding="utf-8") as fh:
        return [
            (row["date"], int(row["issued"]), int(row["no_show"]))
            for row in csv.DictReader(fh)
        ]


class TestFit:
    def test_all_showed(self):
        tickets = [TicketRecord(0, g, showed=True) for g in range(20)]
        model = fit_noshow(tickets)
        assert all(r == 0.0 for r in model.rates)

    def test_direct_ratio(self):
        tickets = [TicketRecord(0, 1, showed=i >= 2) for i in range(10)]
        model = fit_noshow(tickets, bucket_edges=())
        assert model.rates == (0.2,)
        assert model.counts == (10,)

    def test_empty_input(self):
        with pytest.raises(EmptyInputError):
            fit_noshow([])

    def test_empty_bucket_inherits_global(self):
        tickets = [TicketRecord(0, 0, showed=i % 4 != 0) for i in range(100)]
        model = fit_noshow(tickets, bucket_edges=(5, 13, 25))
        assert model.rates[0] == pytest.approx(0.25)
        assert model.rates[1] == pytest.approx(0.25)  # empty, inherits global

    def test_synthetic_recovery_within_tolerance(self, rng):
        truth = (0.05, 0.15, 0.30)
        edges = (5, 13)
        tickets = []
        for _ in range(10_000):
            bucket = int(rng.integers(0, 3))
            gap = int(rng.integers((0, 5, 13)[bucket], (5, 13, 30)[bucket]))
            showed = rng.random() >= truth[bucket]
            tickets.append(TicketRecord(0, gap, showed=bool(showed)))
        model = fit_noshow(tickets, bucket_edges=edges)
        for got, want in zip(model.rates, truth):
            assert abs(got - want) <= 0.02

    def test_monotone_generated_rates_refit_monotone(self, rng):
        truth = (0.05, 0.35)
        tickets = []
        for _ in range(4000):
            bucket = int(rng.integers(0, 2))
            gap = int(rng.integers(0, 5)) if bucket == 0 else int(rng.integers(5, 20))
            tickets.append(
                TicketRecord(0, gap, showed=bool(rng.random() >= truth[bucket]))
            )
        model = fit_noshow(tickets, bucket_edges=(5,))
        assert model.rates[1] >= model.rates[0]

    def test_group_tickets_weigh_persons(self):
        tickets = [
            TicketRecord(0, 0, group_size=9, showed=False),
            TicketRecord(0, 0, group_size=1, showed=True),
        ]
        model = fit_noshow(tickets, bucket_edges=())
        assert model.rates[0] == pytest.approx(0.9)


class TestPredict:
    def test_bucket_rate_no_offset(self):
        model = NoShowModel((5,), (0.2, 0.4), (10, 10))
        assert predict_noshow(model, 2, 0) == 0.2
        assert predict_noshow(model, 9, 0) == 0.4

    def test_clamped_at_one(self):
        model = NoShowModel(
            (5,), (0.95, 0.5), (10, 10),
            class_offsets={"evening": 0.1},
            slot_class_labels=("evening",) * 4,
        )
        assert predict_noshow(model, 0, 2) == 1.0

    def test_negative_gap_rejected(self):
        model = NoShowModel((5,), (0.2, 0.4), (10, 10))
        with pytest.raises(ConfigError):
            predict_noshow(model, -1, 0)


class TestDailyRate:
    def test_table3_first_row(self):
        _, issued, noshow = table3_rows()[0]
        assert round(daily_rate_from_counts(issued, noshow), 4) == 0.1974

    def test_table3_last_row(self):
        _, issued, noshow = table3_rows()[-1]
        assert round(daily_rate_from_counts(issued, noshow), 4) == 0.1186

    def test_zero_noshows(self):
        tickets = [TicketRecord(0, 3, showed=True)] * 5
        assert daily_noshow_rate(tickets) == 0.0

    def test_per_person_weighting(self):
        tickets = [
            TicketRecord(0, 0, group_size=8, showed=False),
            TicketRecord(0, 0, group_size=2, showed=True),
        ]
        assert daily_noshow_rate(tickets) == pytest.approx(0.8)

    def test_empty(self):
        with pytest.raises(EmptyInputError):
            daily_noshow_rate([])


class TestOverbooking:
    def test_no_overbooking_at_full_show(self):
        assert overbooking_limit(100, 1.0, 0.0) == 100

    def test_divides_by_show_rate(self):
        # floor(100/0.9) = 111; expectation check: 111 * 0.9 = 99.9 <= 100
        assert overbooking_limit(100, 0.9, 0.0) == 111

    def test_margin_makes_planning_conservative(self):
        assert overbooking_limit(100, 0.9, 0.05) == 105

    def test_nonpositive_rate_rejected(self):
        with pytest.raises(ConfigError):
            overbooking_limit(100, 0.0, 0.0)

    def test_monotonicity_grid(self):
        targets = (0, 1, 17, 100, 500)
        rates = (0.2, 0.5, 0.8, 0.9, 1.0)
        margins = (0.0, 0.05, 0.2, 0.5)
        for target in targets:
            for rate in rates:
                for lo, hi in zip(margins, margins[1:]):
                    assert overbooking_limit(target, rate, hi) <= overbooking_limit(
                        target, rate, lo
                    )
            for margin in margins:
                for lo, hi in zip(rates, rates[1:]):
                    assert overbooking_limit(target, hi, margin) <= overbooking_limit(
                        target, lo, margin
                    )

    def test_expected_attendance_bound(self):
        for target in (0, 3, 50, 997):
            for rate in (0.3, 0.62, 0.95, 1.0):
                for margin in (0.0, 0.04, 0.3):
                    issuable = overbooking_limit(target, rate, margin)
                    planning = min(1.0, rate + margin)
                    assert issuable * planning <= target + 1

    def test_equals_target_when_clamped_rate_is_one(self):
        assert overbooking_limit(250, 0.97, 0.1) == 250


class TestModelSerialization:
    def test_round_trip(self):
        model = NoShowModel(
            (5, 13), (0.1, 0.2, 0.4), (100, 50, 25),
            class_offsets={"evening": 0.05},
        )
        again = NoShowModel.from_text(model.to_text())
        assert again.bucket_edges == model.bucket_edges
        assert again.rates == model.rates
        assert again.counts == model.counts
        assert again.class_offsets == model.class_offsets

    def test_invalid_rate_rejected(self):
        with pytest.raises(ConfigError):
            NoShowModel((5,), (0.2, 1.4), (1, 1))

    def test_visit_before_booking_rejected(self):
        with pytest.raises(ConfigError):
            TicketRecord(booking_slot=5, visit_slot=3)
