import math

import pytest

from printnav import gcode
from printnav.errors import GcodeParseError, ScheduleError
from printnav.qsp import TaskClass


FIXTURE = "sample_part.gcode"


@pytest.fixture
def fixture_text(data_dir):
    return (data_dir / FIXTURE).read_text()


# hand-timed oracle for the shipped fixture: distance / (feedrate/60)
# per move, computed from the coordinates in the file
GOLDEN_SEGMENTS = [
    # (end, feed, extruding, task, duration_s)
    ((10, 0, 0), 600, True, TaskClass.CONTOUR, 10.0 / 10.0),
    ((10, 10, 0), 600, True, TaskClass.CONTOUR, 1.0),
    ((0, 10, 0), 600, True, TaskClass.CONTOUR, 1.0),
    ((0, 0, 0), 600, True, TaskClass.CONTOUR, 1.0),
    ((2, 2, 0), 1200, False, TaskClass.INFILL, math.sqrt(8.0) / 20.0),
    ((8, 8, 0), 300, True, TaskClass.INFILL, math.sqrt(72.0) / 5.0),
    ((0, 0, 0), 1200, False, TaskClass.SUPPORT, math.sqrt(128.0) / 20.0),
    ((5, 0, 0), 900, True, TaskClass.SUPPORT, 5.0 / 15.0),
]


class TestParse:
    def test_single_move(self):
        segs = gcode.parse_gcode(";TYPE:FILL\nG1 X10 Y0 E1 F600\n")
        assert len(segs) == 1
        s = segs[0]
        assert s.length_mm == pytest.approx(10.0)
        assert s.feedrate == 600
        assert s.task == TaskClass.INFILL
        assert s.extruding
        assert s.duration_s == pytest.approx(1.0)

    def test_empty_file(self):
        assert gcode.parse_gcode("") == []

    def test_fixture_against_hand_timing(self, fixture_text):
        segs = gcode.parse_gcode(fixture_text)
        assert len(segs) == len(GOLDEN_SEGMENTS)
        for seg, (end, feed, ext, task, dur) in zip(segs, GOLDEN_SEGMENTS):
            assert seg.end == pytest.approx(end)
            assert seg.feedrate == feed
            assert seg.extruding == ext
            assert seg.task == task
            assert seg.duration_s == pytest.approx(dur, abs=1e-12)

    def test_modal_feedrate(self):
        segs = gcode.parse_gcode("G1 X5 F600\nG1 X10\n")
        assert segs[0].feedrate == segs[1].feedrate == 600

    def test_relative_extrusion(self):
        text = "M83\n;TYPE:FILL\nG1 X10 E0.5 F600\nG1 X20 E0 F600\n"
        segs = gcode.parse_gcode(text)
        assert segs[0].extruding
        assert not segs[1].extruding

    def test_g92_reset(self):
        text = ";TYPE:FILL\nG1 X10 E5 F600\nG92 E0\nG1 X20 E5\n"
        segs = gcode.parse_gcode(text)
        assert segs[0].extruding and segs[1].extruding

    def test_retract_produces_no_segment(self):
        segs = gcode.parse_gcode(";TYPE:FILL\nG1 X10 E1 F600\nG1 E0.2\n")
        assert len(segs) == 1

    def test_prusa_style_comment(self):
        segs = gcode.parse_gcode("; TYPE: External perimeter\nG1 X3 E1 F600\n")
        assert segs[0].task == TaskClass.CONTOUR

    def test_unknown_type_unclassified(self):
        segs = gcode.parse_gcode(";TYPE:SKIRT\nG1 X3 E1 F600\n")
        assert segs[0].task == gcode.UNCLASSIFIED

    def test_custom_type_map(self):
        segs = gcode.parse_gcode(
            ";TYPE:BRIM\nG1 X3 E1 F600\n",
            type_map={"BRIM": TaskClass.SUPPORT},
        )
        assert segs[0].task == TaskClass.SUPPORT

    def test_malformed_word_reports_line(self):
        with pytest.raises(GcodeParseError, match="line 2"):
            gcode.parse_gcode("G1 X1 F600\nG1 Xoops\n")

    def test_move_before_feedrate(self):
        with pytest.raises(GcodeParseError):
            gcode.parse_gcode("G1 X10\n")


class TestTimeline:
    def test_single_interval(self):
        segs = gcode.parse_gcode(";TYPE:FILL\nG1 X10 E1 F600\n")
        tl = gcode.build_timeline(segs)
        assert len(tl) == 1
        assert tl[0].task == TaskClass.INFILL
        assert tl[0].t_start == 0.0
        assert tl[0].t_end == pytest.approx(1.0)

    def test_concatenation(self):
        text = (";TYPE:WALL-OUTER\nG1 X20 E1 F600\n"
                ";TYPE:FILL\nG1 X50 E2 F600\n")
        tl = gcode.build_timeline(gcode.parse_gcode(text))
        assert [iv.task for iv in tl] == [TaskClass.CONTOUR, TaskClass.INFILL]
        assert tl[0].t_end == pytest.approx(2.0)
        assert tl[1].t_start == pytest.approx(2.0)
        assert tl[1].t_end == pytest.approx(5.0)

    def test_fixture_intervals(self, fixture_text):
        tl = gcode.build_timeline(gcode.parse_gcode(fixture_text))
        assert [iv.task for iv in tl] == [
            TaskClass.CONTOUR, TaskClass.INFILL, TaskClass.SUPPORT,
        ]
        t_contour = 4.0
        t_infill = math.sqrt(8) / 20 + math.sqrt(72) / 5
        t_support = math.sqrt(128) / 20 + 5 / 15
        assert tl[0].t_end == pytest.approx(t_contour, abs=1e-9)
        assert tl[1].t_end == pytest.approx(t_contour + t_infill, abs=1e-9)
        assert tl[2].t_end == pytest.approx(
            t_contour + t_infill + t_support, abs=1e-9
        )

    def test_total_duration_equals_segment_sum(self, fixture_text):
        segs = gcode.parse_gcode(fixture_text)
        tl = gcode.build_timeline(segs)
        assert tl[-1].t_end == pytest.approx(
            sum(s.duration_s for s in segs), abs=1e-9
        )

    def test_travel_inherits_next_class(self):
        text = (";TYPE:WALL-OUTER\nG1 X10 E1 F600\n"
                "G0 X20 F600\n;TYPE:SUPPORT\nG1 X30 E2 F600\n")
        tl = gcode.build_timeline(gcode.parse_gcode(text))
        # the travel move belongs to the upcoming support interval
        assert [iv.task for iv in tl] == [TaskClass.CONTOUR, TaskClass.SUPPORT]
        assert tl[1].t_start == pytest.approx(1.0)

    def test_unclassified_extrusion_is_contour(self):
        tl = gcode.build_timeline(gcode.parse_gcode("G1 X10 E1 F600\n"))
        assert tl[0].task == TaskClass.CONTOUR

    def test_empty(self):
        assert gcode.build_timeline([]) == []


SPEEDS = {TaskClass.CONTOUR: 0.3, TaskClass.INFILL: 0.5, TaskClass.SUPPORT: 0.7}


class TestDiscretize:
    def test_uniform(self):
        tl = [gcode.TaskInterval(TaskClass.INFILL, 0.0, 10.0)]
        sched = gcode.discretize_schedule(tl, 1.0, {TaskClass.INFILL: 0.5})
        assert sched.v_max_per_step == tuple([0.5] * 10)

    def test_straddle_takes_min(self):
        tl = [
            gcode.TaskInterval(TaskClass.CONTOUR, 0.0, 1.5),
            gcode.TaskInterval(TaskClass.SUPPORT, 1.5, 3.0),
        ]
        sched = gcode.discretize_schedule(tl, 1.0, SPEEDS)
        assert sched.v_max_per_step == (0.3, 0.3, 0.7)

    def test_fixture_schedule(self, fixture_text):
        tl = gcode.build_timeline(gcode.parse_gcode(fixture_text))
        sched = gcode.discretize_schedule(tl, 1.0, SPEEDS)
        assert sched.v_max_per_step == (0.3, 0.3, 0.3, 0.3, 0.5, 0.5, 0.7)

    def test_pointwise_bounded_by_active_classes(self, fixture_text):
        tl = gcode.build_timeline(gcode.parse_gcode(fixture_text))
        sched = gcode.discretize_schedule(tl, 0.25, SPEEDS)
        for k, cap in enumerate(sched.v_max_per_step):
            lo, hi = k * 0.25, (k + 1) * 0.25
            active = [SPEEDS[iv.task] for iv in tl
                      if iv.t_start < hi and iv.t_end > lo]
            for speed in active:
                assert cap <= speed + 1e-12

    def test_single_class_constant(self):
        tl = [gcode.TaskInterval(TaskClass.SUPPORT, 0.0, 7.3)]
        sched = gcode.discretize_schedule(tl, 2.0, SPEEDS)
        assert all(v == 0.7 for v in sched.v_max_per_step)

    def test_empty_timeline(self):
        with pytest.raises(ScheduleError):
            gcode.discretize_schedule([], 1.0, SPEEDS)

    def test_missing_class_speed(self):
        tl = [gcode.TaskInterval(TaskClass.CONTOUR, 0.0, 1.0)]
        with pytest.raises(ScheduleError):
            gcode.discretize_schedule(tl, 1.0, {TaskClass.INFILL: 0.5})


class TestScheduleIO:
    def test_round_trip_bit_exact(self, tmp_path, fixture_text):
        tl = gcode.build_timeline(gcode.parse_gcode(fixture_text))
        sched = gcode.discretize_schedule(tl, 0.7, SPEEDS)
        path = tmp_path / "schedule.json"
        gcode.save_schedule(sched, path)
        again = gcode.load_schedule(path)
        assert again.dt == sched.dt
        assert again.v_max_per_step == sched.v_max_per_step
        assert again.class_speed_map == sched.class_speed_map

    def test_cap_extends_past_end(self):
        sched = gcode.SpeedSchedule(1.0, (0.3, 0.5), SPEEDS)
        assert sched.cap_at(0) == 0.3
        assert sched.cap_at(1) == 0.5
        assert sched.cap_at(99) == 0.5

    def test_step_interval_builder(self):
        sched = gcode.schedule_from_step_intervals(
            1.0,
            {
                TaskClass.SUPPORT: [(0, 2), (6, 7)],
                TaskClass.CONTOUR: [(3, 5)],
            },
            SPEEDS,
        )
        assert sched.v_max_per_step == (0.7, 0.7, 0.7, 0.3, 0.3, 0.3, 0.7, 0.7)

    def test_gap_rejected(self):
        with pytest.raises(ScheduleError):
            gcode.schedule_from_step_intervals(
                1.0, {TaskClass.SUPPORT: [(0, 1), (3, 4)]}, SPEEDS
            )
