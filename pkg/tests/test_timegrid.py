import pytest
from hypothesis import given, strategies as st

from museq.errors import ConfigError, UnpartitionedSlotError
from museq.timegrid import (
    DayContext,
    SlotClass,
    SlotGrid,
    class_of,
    default_classes,
    validate_partition,
)


class TestSlotOf:
    def test_opening_minute_is_slot_zero(self, grid44):
        assert grid44.slot_of(8 * 60) == 0

    def test_sixteen_hundred_is_slot_32(self, grid44):
        # (16:00 - 08:00) / 15 minutes
        assert grid44.slot_of(16 * 60) == 32

    def test_before_opening_is_out_of_hours(self, grid44):
        assert grid44.slot_of(8 * 60 - 1) is None

    def test_closing_minute_is_out_of_hours(self, grid44):
        assert grid44.slot_of(grid44.closing_minute) is None

    def test_last_in_hours_minute(self, grid44):
        assert grid44.slot_of(grid44.closing_minute - 1) == 43

    @given(
        length=st.integers(1, 120),
        num=st.integers(1, 96),
        opening=st.integers(0, 12 * 60),
        slot=st.data(),
    )
    def test_round_trip_every_in_hours_minute(self, length, num, opening, slot):
        grid = SlotGrid(length, num, opening)
        s = slot.draw(st.integers(0, num - 1))
        offset = slot.draw(st.integers(0, length - 1))
        minute = grid.slot_start_minute(s) + offset
        assert grid.slot_of(minute) == s


class TestClasses:
    def test_default_classes_partition(self, grid44):
        classes = default_classes(grid44)
        validate_partition(classes, grid44.num_slots)
        for s in range(grid44.num_slots):
            class_of(classes, s)  # must not raise; uniqueness via partition

    def test_first_slot_is_early_morning(self, grid44):
        assert class_of(default_classes(grid44), 0).label == "early_morning"

    def test_slot_32_is_evening(self, grid44):
        # the 16:00 boundary separates afternoon from evening
        assert class_of(default_classes(grid44), 32).label == "evening"

    def test_last_slot_is_evening(self, grid44):
        assert class_of(default_classes(grid44), 43).label == "evening"

    def test_unpartitioned_slot_raises(self):
        classes = (SlotClass("early_morning", 0, 4),)
        with pytest.raises(UnpartitionedSlotError):
            class_of(classes, 7)

    def test_gap_in_partition_rejected(self):
        classes = (
            SlotClass("early_morning", 0, 4),
            SlotClass("late_morning", 5, 10),
        )
        with pytest.raises(ConfigError):
            validate_partition(classes, 10)

    def test_short_grid_drops_empty_classes(self):
        grid = SlotGrid(15, 8, 8 * 60)  # closes 10:00, before every boundary
        classes = default_classes(grid)
        validate_partition(classes, grid.num_slots)
        assert classes[0].label == "early_morning"

    def test_unknown_label_rejected(self):
        with pytest.raises(ConfigError):
            SlotClass("brunch", 0, 4)


class TestDayContext:
    def test_negative_multiplier_rejected(self):
        with pytest.raises(ConfigError):
            DayContext(demand_multiplier=-0.5)

    def test_defaults(self):
        ctx = DayContext()
        assert ctx.demand_multiplier == 1.0
        assert ctx.special_events == ()


class TestGridValidation:
    @pytest.mark.parametrize("kwargs", [
        {"slot_length_minutes": 0},
        {"num_slots": 0},
        {"opening_minute": -1},
    ])
    def test_bad_grid_rejected(self, kwargs):
        with pytest.raises(ConfigError):
            SlotGrid(**{"slot_length_minutes": 15, "num_slots": 44,
                        "opening_minute": 480, **kwargs})
