"""G-code toolpath analysis and speed-schedule extraction.

Slicer output tells us what the printer will be doing when: type
comments mark contour/infill/support work, and move lengths divided by
feedrates give timing. From that we build a task timeline and
discretize it into a per-controller-step speed cap for the mobile base.

Timing assumes constant feedrate per move (no acceleration modeling)
and ignores arc moves and retraction; see the package README for the
supported dialect.
"""

from __future__ import annotations

import json
import math
import re
from dataclasses import dataclass

from .errors import GcodeParseError, ScheduleError
from .qsp import TaskClass

UNCLASSIFIED = "unclassified"

#: Default mapping from slicer type-comment names to task classes.
#: Keys are upper-cased; both ";TYPE:FILL" and "; TYPE: Fill" match.
DEFAULT_TYPE_MAP = {
    "WALL-OUTER": TaskClass.CONTOUR,
    "EXTERNAL PERIMETER": TaskClass.CONTOUR,
    "PERIMETER": TaskClass.CONTOUR,
    "FILL": TaskClass.INFILL,
    "INFILL": TaskClass.INFILL,
    "SOLID INFILL": TaskClass.INFILL,
    "TOP SOLID INFILL": TaskClass.INFILL,
    "SUPPORT": TaskClass.SUPPORT,
    "SUPPORT MATERIAL": TaskClass.SUPPORT,
}

_TYPE_RE = re.compile(r"^\s*TYPE\s*:\s*(.+?)\s*$", re.IGNORECASE)
_WORD_RE = re.compile(r"^([A-Za-z])([-+]?(?:\d+\.?\d*|\.\d+))$")


@dataclass(frozen=True)
class GcodeSegment:
    """One linear move: endpoints in mm, feedrate in mm/min."""

    start: tuple[float, float, float]
    end: tuple[float, float, float]
    feedrate: float
    extruding: bool
    task: TaskClass | str  # TaskClass or UNCLASSIFIED

    @property
    def length_mm(self) -> float:
        return math.dist(self.start, self.end)

    @property
    def duration_s(self) -> float:
        return self.length_mm / (self.feedrate / 60.0)


@dataclass(frozen=True)
class TaskInterval:
    task: TaskClass
    t_start: float
    t_end: float

    def __post_init__(self):
        if not self.t_start < self.t_end:
            raise ValueError("interval needs t_start < t_end")


@dataclass(frozen=True)
class SpeedSchedule:
    """Per-step base speed cap derived from the print task timeline."""

    dt: float
    v_max_per_step: tuple[float, ...]
    class_speed_map: dict[TaskClass, float]

    def __post_init__(self):
        if self.dt <= 0:
            raise ScheduleError("dt must be positive")
        steps = tuple(float(v) for v in self.v_max_per_step)
        if not steps:
            raise ScheduleError("schedule needs at least one step")
        if any(v <= 0 for v in steps):
            raise ScheduleError("every schedule entry must be positive")
        object.__setattr__(self, "v_max_per_step", steps)
        object.__setattr__(self, "class_speed_map", dict(self.class_speed_map))

    def cap_at(self, k: int) -> float:
        """Speed cap at global step k; the last entry extends forever."""
        if k < 0:
            raise IndexError("step index must be nonnegative")
        steps = self.v_max_per_step
        return steps[min(k, len(steps) - 1)]


def _parse_words(body: str, lineno: int):
    words = {}
    for token in body.split():
        m = _WORD_RE.match(token)
        if not m:
            raise GcodeParseError(f"malformed word {token!r}", lineno)
        letter = m.group(1).upper()
        if letter in words:
            raise GcodeParseError(f"repeated word {letter!r}", lineno)
        words[letter] = float(m.group(2))
    return words


def parse_gcode(text: str, type_map=None) -> list[GcodeSegment]:
    """Parse G0/G1 toolpath moves into classified linear segments.

    Carries feedrate forward modally, detects absolute/relative E mode
    from M82/M83 (absolute is the default), honors G92 position resets,
    and assigns each move the task class of the most recent type
    comment. Moves with no XYZ displacement (retracts, feedrate-only
    lines) produce no segment. Unknown commands are ignored.
    """
    mapping = dict(DEFAULT_TYPE_MAP)
    if type_map:
        mapping.update({k.upper(): v for k, v in type_map.items()})

    pos = [0.0, 0.0, 0.0]
    e_pos = 0.0
    feedrate = None
    e_relative = False
    task: TaskClass | str = UNCLASSIFIED
    segments: list[GcodeSegment] = []

    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line:
            continue
        body, _, comment = line.partition(";")
        m = _TYPE_RE.match(comment)
        if m:
            task = mapping.get(m.group(1).upper(), UNCLASSIFIED)
        body = body.strip()
        if not body:
            continue
        words = _parse_words(body, lineno)
        cmd_letter = next(iter(words))
        command = f"{cmd_letter}{words[cmd_letter]:g}"
        if command == "M82":
            e_relative = False
            continue
        if command == "M83":
            e_relative = True
            continue
        if command == "G92":
            for axis, idx in (("X", 0), ("Y", 1), ("Z", 2)):
                if axis in words:
                    pos[idx] = words[axis]
            if "E" in words:
                e_pos = words["E"]
            continue
        if command not in ("G0", "G1"):
            continue

        if "F" in words:
            feedrate = words["F"]
            if feedrate <= 0:
                raise GcodeParseError("feedrate must be positive", lineno)
        target = pos.copy()
        for axis, idx in (("X", 0), ("Y", 1), ("Z", 2)):
            if axis in words:
                target[idx] = words[axis]
        if e_relative:
            e_delta = words.get("E", 0.0)
            e_pos += e_delta
        else:
            e_target = words.get("E", e_pos)
            e_delta = e_target - e_pos
            e_pos = e_target
        if math.dist(pos, target) > 0.0:
            if feedrate is None:
                raise GcodeParseError("move before any feedrate was set", lineno)
            segments.append(
                GcodeSegment(
                    start=tuple(pos),
                    end=tuple(target),
                    feedrate=feedrate,
                    extruding=e_delta > 1e-12,
                    task=task,
                )
            )
        pos = target
    return segments


def build_timeline(segments) -> list[TaskInterval]:
    """Collapse timed segments into a merged task timeline.

    Travel moves inherit the class of the next extruding segment (they
    are preparation for it); unclassified extruding work is treated as
    contour, the strictest class. Consecutive same-class stretches
    merge into one interval.
    """
    if not segments:
        return []
    classes: list[TaskClass] = [TaskClass.CONTOUR] * len(segments)
    upcoming = TaskClass.CONTOUR  # fallback for a trailing travel tail
    for i in range(len(segments) - 1, -1, -1):
        seg = segments[i]
        if seg.extruding:
            own = seg.task
            if not isinstance(own, TaskClass):
                own = TaskClass.CONTOUR
            classes[i] = own
            upcoming = own
        else:
            classes[i] = upcoming

    intervals: list[TaskInterval] = []
    t = 0.0
    for seg, cls in zip(segments, classes):
        t_next = t + seg.duration_s
        if intervals and intervals[-1].task == cls:
            last = intervals[-1]
            intervals[-1] = TaskInterval(cls, last.t_start, t_next)
        else:
            intervals.append(TaskInterval(cls, t, t_next))
        t = t_next
    return intervals


def discretize_schedule(timeline, dt: float, class_speed_map) -> SpeedSchedule:
    """Per-step speed caps: the minimum over tasks active in each step.

    Step k covers [k*dt, (k+1)*dt); a step that straddles a changeover
    takes the stricter of its tasks' speeds.
    """
    if dt <= 0:
        raise ScheduleError("dt must be positive")
    timeline = list(timeline)
    if not timeline:
        raise ScheduleError("empty timeline: no schedule derivable")
    for iv in timeline:
        if iv.task not in class_speed_map:
            raise ScheduleError(f"no speed given for task {iv.task.name}")
    t_end = timeline[-1].t_end
    n_steps = max(1, math.ceil(t_end / dt - 1e-12))
    caps = []
    for k in range(n_steps):
        lo, hi = k * dt, (k + 1) * dt
        active = [
            class_speed_map[iv.task]
            for iv in timeline
            if iv.t_start < hi and iv.t_end > lo
        ]
        if not active:  # only possible past t_end inside the final step
            active = [class_speed_map[timeline[-1].task]]
        caps.append(min(active))
    return SpeedSchedule(dt, tuple(caps), dict(class_speed_map))


def schedule_from_step_intervals(dt, intervals, class_speed_map) -> SpeedSchedule:
    """Build a schedule directly from inclusive step-index intervals.

    ``intervals`` maps each task class to a list of (first, last) step
    pairs; useful when the task sequence is specified per step rather
    than via a G-code file.
    """
    n_steps = 0
    for spans in intervals.values():
        for first, last in spans:
            n_steps = max(n_steps, last + 1)
    if n_steps == 0:
        raise ScheduleError("no step intervals given")
    caps = [math.inf] * n_steps
    for task, spans in intervals.items():
        v = class_speed_map[task]
        for first, last in spans:
            for k in range(first, last + 1):
                caps[k] = min(caps[k], v)
    if any(math.isinf(c) for c in caps):
        missing = [k for k, c in enumerate(caps) if math.isinf(c)]
        raise ScheduleError(f"steps {missing[:5]}... not covered by any task")
    return SpeedSchedule(dt, tuple(caps), dict(class_speed_map))


# ---------------------------------------------------------------------------
# Schedule JSON


def save_schedule(schedule: SpeedSchedule, path) -> None:
    doc = {
        "dt": schedule.dt,
        "class_speed_map": {
            task.name.lower(): v for task, v in schedule.class_speed_map.items()
        },
        "v_max_per_step": list(schedule.v_max_per_step),
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=2)
        fh.write("\n")


def load_schedule(path) -> SpeedSchedule:
    with open(path, "r", encoding="utf-8") as fh:
        doc = json.load(fh)
    try:
        class_map = {
            TaskClass.parse(name): float(v)
            for name, v in doc["class_speed_map"].items()
        }
        return SpeedSchedule(
            dt=float(doc["dt"]),
            v_max_per_step=tuple(float(v) for v in doc["v_max_per_step"]),
            class_speed_map=class_map,
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise ScheduleError(f"{path}: bad schedule file: {exc}") from exc
