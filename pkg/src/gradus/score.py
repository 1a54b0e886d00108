"""Structured model of two-staff piano scores and MusicXML I/O.

A :class:`Score` is an immutable sequence of measures holding
:class:`NoteEvent` objects with exact rational onsets and durations
(fractions of a quarter note).  Time is never represented as a float, so
onset arithmetic stays exact across ``<divisions>`` changes.

The module reads partwise MusicXML (plain ``.musicxml``/``.xml`` or
compressed ``.mxl``), writes it back, and exposes a time-ordered
:func:`timeline` view of which pitches sound in each segment of the piece.
"""

from __future__ import annotations

import io
import xml.etree.ElementTree as ET
import zipfile
from dataclasses import dataclass, field, replace
from fractions import Fraction
from math import lcm
from typing import Iterator, Optional, Sequence

__all__ = [
    "ScoreError",
    "MusicXmlParseError",
    "UnsupportedStructureError",
    "ValidationError",
    "Pitch",
    "NoteEvent",
    "Measure",
    "Score",
    "TimelineSegment",
    "parse_musicxml",
    "read_musicxml",
    "serialize_musicxml",
    "write_musicxml",
    "validate_two_staff",
    "timeline",
    "merged_sounding_intervals",
    "type_for_duration",
    "duration_for_type",
    "DURATION_TYPES",
    "TUPLET_RATIOS",
]


class ScoreError(Exception):
    """Base class for score-model failures."""


class MusicXmlParseError(ScoreError):
    """Raised for malformed or unreadable MusicXML input."""


class UnsupportedStructureError(ScoreError):
    """Raised when a document is well-formed but outside the supported corpus shape."""


class ValidationError(ScoreError):
    """Raised when a parsed score fails corpus eligibility checks."""


_STEP_TO_PC = {"C": 0, "D": 2, "E": 4, "F": 5, "G": 7, "A": 9, "B": 11}
_ALTER_TEXT = {-2: "bb", -1: "b", 0: "", 1: "#", 2: "##"}
_TEXT_ALTER = {v: k for k, v in _ALTER_TEXT.items()}

# Note type names (MusicXML vocabulary) and their length in quarter notes.
DURATION_TYPES: dict[str, Fraction] = {
    "breve": Fraction(8),
    "whole": Fraction(4),
    "half": Fraction(2),
    "quarter": Fraction(1),
    "eighth": Fraction(1, 2),
    "16th": Fraction(1, 4),
    "32nd": Fraction(1, 8),
    "64th": Fraction(1, 16),
}

# Supported time-modification ratios as (actual, normal) note counts.
TUPLET_RATIOS: tuple[tuple[int, int], ...] = ((3, 2), (5, 4))

_DOT_FACTORS = (Fraction(1), Fraction(3, 2), Fraction(7, 4))


def type_for_duration(quarters: Fraction) -> Optional[tuple[str, int, Optional[tuple[int, int]]]]:
    """Decompose a rational duration into ``(type, dots, tuplet)``.

    Returns None when the duration is not representable as a single notated
    value (plain, dotted once or twice, optionally under a supported tuplet
    ratio).  Plain values are preferred over tuplet readings.
    """
    if quarters <= 0:
        return None
    for ratio in ((1, 1),) + TUPLET_RATIOS:
        actual, normal = ratio
        notated = quarters * actual / normal
        for dots, factor in enumerate(_DOT_FACTORS):
            base = notated / factor
            for name, length in DURATION_TYPES.items():
                if base == length:
                    tuplet = None if ratio == (1, 1) else ratio
                    return name, dots, tuplet
    return None


def duration_for_type(name: str, dots: int = 0, tuplet: Optional[tuple[int, int]] = None) -> Fraction:
    """Inverse of :func:`type_for_duration`."""
    if name not in DURATION_TYPES:
        raise ValueError(f"unknown note type {name!r}")
    if not 0 <= dots < len(_DOT_FACTORS):
        raise ValueError(f"unsupported dot count {dots}")
    q = DURATION_TYPES[name] * _DOT_FACTORS[dots]
    if tuplet is not None:
        actual, normal = tuplet
        q = q * normal / actual
    return q


@dataclass(frozen=True)
class Pitch:
    """A notated pitch with its sounding MIDI number.

    ``pitch_class`` is always ``midi_number % 12`` and ``octave`` is the
    notated (MusicXML) octave, which matches ``midi_number // 12 - 1`` for
    natural and sharp/flat spellings that stay within the octave.
    """

    midi_number: int
    pitch_class: int
    octave: int
    step: str = "C"
    alter: int = 0

    def __post_init__(self) -> None:
        if not 0 <= self.midi_number <= 127:
            raise ValueError(f"midi_number {self.midi_number} out of range")
        if self.pitch_class != self.midi_number % 12:
            raise ValueError("pitch_class inconsistent with midi_number")
        if self.step not in _STEP_TO_PC:
            raise ValueError(f"bad step {self.step!r}")
        if self.alter not in _ALTER_TEXT:
            raise ValueError(f"unsupported alter {self.alter}")
        spelled = 12 * (self.octave + 1) + _STEP_TO_PC[self.step] + self.alter
        if spelled != self.midi_number:
            raise ValueError("spelling inconsistent with midi_number")

    @classmethod
    def from_parts(cls, step: str, alter: int, octave: int) -> "Pitch":
        midi = 12 * (octave + 1) + _STEP_TO_PC[step] + alter
        return cls(midi, midi % 12, octave, step, alter)

    @classmethod
    def from_midi(cls, midi: int) -> "Pitch":
        """Sharp-spelled pitch for a MIDI number."""
        octave, pc = divmod(midi, 12)
        octave -= 1
        for step, base in _STEP_TO_PC.items():
            if base == pc:
                return cls(midi, pc, octave, step, 0)
        for step, base in _STEP_TO_PC.items():
            if (base + 1) % 12 == pc:
                # sharp of the step below
                return cls(midi, pc, octave, step, 1)
        raise AssertionError("unreachable")

    @property
    def name(self) -> str:
        """Compact spelling such as ``C4``, ``F#3`` or ``Bb5``."""
        return f"{self.step}{_ALTER_TEXT[self.alter]}{self.octave}"

    @classmethod
    def from_name(cls, text: str) -> "Pitch":
        step = text[:1]
        rest = text[1:]
        alter_text = ""
        while rest and rest[0] in "#b" and alter_text + rest[0] in _TEXT_ALTER:
            alter_text += rest[0]
            rest = rest[1:]
        if step not in _STEP_TO_PC or not rest:
            raise ValueError(f"bad pitch name {text!r}")
        try:
            octave = int(rest)
        except ValueError as exc:
            raise ValueError(f"bad pitch name {text!r}") from exc
        return cls.from_parts(step, _TEXT_ALTER[alter_text], octave)


@dataclass(frozen=True)
class NoteEvent:
    """One note or rest.

    Onset and duration are in quarter notes from the start of the score.
    ``pitch`` is None for rests.  Grace notes carry the duration implied by
    their notated type but do not occupy time (they are skipped by the
    timeline and by onset accounting).  ``hidden`` marks gap-filling rests
    that were not literally present in the source.
    """

    onset: Fraction
    duration: Fraction
    pitch: Optional[Pitch]
    voice: int = 1
    staff: int = 1
    tie_start: bool = False
    tie_stop: bool = False
    chord: bool = False
    grace: bool = False
    hidden: bool = False

    def __post_init__(self) -> None:
        if self.onset < 0:
            raise ValueError("onset must be >= 0")
        if self.duration <= 0:
            raise ValueError("duration must be > 0")
        if self.staff not in (1, 2):
            raise ValueError("staff must be 1 or 2")

    @property
    def is_rest(self) -> bool:
        return self.pitch is None

    @property
    def end(self) -> Fraction:
        return self.onset + self.duration


@dataclass(frozen=True)
class Measure:
    index: int
    start: Fraction
    duration: Fraction
    events: tuple[NoteEvent, ...] = ()
    time_sig: Optional[tuple[int, int]] = None
    key_fifths: Optional[int] = None
    clefs: tuple[Optional[str], Optional[str]] = (None, None)

    @property
    def end(self) -> Fraction:
        return self.start + self.duration


@dataclass(frozen=True)
class Score:
    """An in-memory two-staff piano piece."""

    measures: tuple[Measure, ...]
    title: Optional[str] = None
    genre: Optional[str] = None
    source_id: Optional[str] = None
    n_staves: int = 2
    validated: bool = False

    def events(self) -> Iterator[NoteEvent]:
        for m in self.measures:
            yield from m.events

    def notes(self, include_grace: bool = False) -> Iterator[NoteEvent]:
        """Pitched events, grace notes excluded unless requested."""
        for ev in self.events():
            if ev.pitch is None:
                continue
            if ev.grace and not include_grace:
                continue
            yield ev

    @property
    def total_duration(self) -> Fraction:
        if not self.measures:
            return Fraction(0)
        return self.measures[-1].end


# ---------------------------------------------------------------------------
# Parsing

def read_musicxml(path: str) -> Score:
    """Read ``.musicxml``/``.xml`` or a compressed ``.mxl`` container."""
    with open(path, "rb") as fh:
        data = fh.read()
    if data[:2] == b"PK" or str(path).endswith(".mxl"):
        data = _unzip_mxl(data)
    return parse_musicxml(data)


def _unzip_mxl(data: bytes) -> bytes:
    try:
        zf = zipfile.ZipFile(io.BytesIO(data))
    except zipfile.BadZipFile as exc:
        raise MusicXmlParseError(f"not a valid mxl container: {exc}") from exc
    with zf:
        root_name = None
        if "META-INF/container.xml" in zf.namelist():
            container = ET.fromstring(zf.read("META-INF/container.xml"))
            rootfile = container.find("rootfiles/rootfile")
            if rootfile is not None:
                root_name = rootfile.get("full-path")
        if root_name is None:
            candidates = [n for n in zf.namelist()
                          if n.endswith((".xml", ".musicxml")) and not n.startswith("META-INF")]
            if not candidates:
                raise MusicXmlParseError("mxl container holds no MusicXML document")
            root_name = candidates[0]
        return zf.read(root_name)


def parse_musicxml(document: bytes | str) -> Score:
    """Parse a partwise MusicXML document into a :class:`Score`.

    Preserves pitch spelling, rational durations, voices, staves, ties and
    chord grouping.  Within each voice, gaps left by ``<forward>`` or
    ``<backup>`` are filled with hidden rests so that every voice is
    contiguous inside each measure it appears in.
    """
    if isinstance(document, str):
        document = document.encode("utf-8")
    if document[:2] == b"PK":
        document = _unzip_mxl(document)
    try:
        root = ET.fromstring(document)
    except ET.ParseError as exc:
        raise MusicXmlParseError(f"XML syntax error: {exc}") from exc
    if root.tag != "score-partwise":
        raise UnsupportedStructureError(f"expected score-partwise, found {root.tag!r}")

    parts = root.findall("part")
    if len(parts) != 1:
        raise UnsupportedStructureError(
            f"expected exactly one part, found {len(parts)}")
    part = parts[0]

    title = _first_text(root, ("movement-title", "work/work-title"))
    genre = _misc_field(root, "genre")
    source_id = _misc_field(root, "source")

    divisions: Optional[int] = None
    declared_staves = 1
    time_sig: Optional[tuple[int, int]] = None
    measures: list[Measure] = []
    cursor = Fraction(0)

    for m_index, m_elem in enumerate(part.findall("measure")):
        m_time: Optional[tuple[int, int]] = None
        m_key: Optional[int] = None
        m_clefs: list[Optional[str]] = [None, None]
        raw: list[NoteEvent] = []
        pos = 0                 # divisions from measure start
        maxpos = 0
        last_onset = 0          # onset of the most recent non-chord note

        for elem in m_elem:
            if elem.tag == "attributes":
                div_el = elem.find("divisions")
                if div_el is not None and div_el.text:
                    divisions = int(div_el.text)
                staves_el = elem.find("staves")
                if staves_el is not None and staves_el.text:
                    declared_staves = max(declared_staves, int(staves_el.text))
                fifths = elem.find("key/fifths")
                if fifths is not None and fifths.text:
                    m_key = int(fifths.text)
                beats = elem.find("time/beats")
                beat_type = elem.find("time/beat-type")
                if beats is not None and beat_type is not None:
                    m_time = (int(beats.text), int(beat_type.text))
                    time_sig = m_time
                for clef in elem.findall("clef"):
                    number = int(clef.get("number", "1"))
                    sign = _first_text(clef, ("sign",)) or "G"
                    line = _first_text(clef, ("line",)) or ""
                    if 1 <= number <= 2:
                        m_clefs[number - 1] = f"{sign}{line}"
                    declared_staves = max(declared_staves, number)
            elif elem.tag == "backup":
                pos -= _required_duration(elem, m_index)
                if pos < 0:
                    raise MusicXmlParseError(
                        f"measure {m_index + 1}: backup before measure start")
            elif elem.tag == "forward":
                pos += _required_duration(elem, m_index)
                maxpos = max(maxpos, pos)
            elif elem.tag == "note":
                is_grace = elem.find("grace") is not None
                is_chord = elem.find("chord") is not None
                is_rest = elem.find("rest") is not None
                voice = int(_first_text(elem, ("voice",)) or 1)
                staff = int(_first_text(elem, ("staff",)) or 1)
                declared_staves = max(declared_staves, staff)
                if staff > 2:
                    # keep parsing; validate_two_staff reports the violation
                    staff = 2
                hidden = elem.get("print-object") == "no"
                ties = {t.get("type") for t in elem.findall("tie")}

                pitch = None
                if not is_rest:
                    p_el = elem.find("pitch")
                    if p_el is None:
                        raise MusicXmlParseError(
                            f"measure {m_index + 1}: note with neither pitch nor rest")
                    step = _first_text(p_el, ("step",)) or "C"
                    alter = int(float(_first_text(p_el, ("alter",)) or 0))
                    octave = int(_first_text(p_el, ("octave",)) or 4)
                    pitch = Pitch.from_parts(step, alter, octave)

                if is_grace:
                    type_text = _first_text(elem, ("type",)) or "eighth"
                    dur_q = DURATION_TYPES.get(type_text, Fraction(1, 2))
                    raw.append(NoteEvent(
                        onset=cursor + _q(pos, divisions, m_index),
                        duration=dur_q, pitch=pitch, voice=voice, staff=staff,
                        grace=True, hidden=hidden))
                    continue

                dur_divs = _required_duration(elem, m_index)
                if divisions is None:
                    raise MusicXmlParseError(
                        f"measure {m_index + 1}: missing divisions attribute")
                onset_divs = last_onset if is_chord else pos
                raw.append(NoteEvent(
                    onset=cursor + _q(onset_divs, divisions, m_index),
                    duration=_q(dur_divs, divisions, m_index),
                    pitch=pitch, voice=voice, staff=staff,
                    tie_start="start" in ties, tie_stop="stop" in ties,
                    chord=is_chord, hidden=hidden))
                if not is_chord:
                    last_onset = pos
                    pos += dur_divs
                    maxpos = max(maxpos, pos)
            # directions, barlines, harmony, prints, sounds: no timing content

        if maxpos > 0:
            m_duration = _q(maxpos, divisions, m_index)
        elif time_sig is not None:
            m_duration = Fraction(time_sig[0] * 4, time_sig[1])
        else:
            m_duration = Fraction(4)

        events = _fill_voice_gaps(raw, cursor, cursor + m_duration, m_index)
        measures.append(Measure(
            index=m_index, start=cursor, duration=m_duration,
            events=tuple(events), time_sig=m_time, key_fifths=m_key,
            clefs=(m_clefs[0], m_clefs[1])))
        cursor += m_duration

    observed = max((ev.staff for m in measures for ev in m.events), default=1)
    return Score(
        measures=tuple(measures), title=title, genre=genre, source_id=source_id,
        n_staves=max(declared_staves, observed))


def _q(divs: int, divisions: Optional[int], m_index: int) -> Fraction:
    if divisions is None:
        raise MusicXmlParseError(f"measure {m_index + 1}: missing divisions attribute")
    return Fraction(divs, divisions)


def _required_duration(elem: ET.Element, m_index: int) -> int:
    text = _first_text(elem, ("duration",))
    if text is None:
        raise MusicXmlParseError(f"measure {m_index + 1}: <{elem.tag}> without duration")
    value = int(float(text))
    if value < 0:
        raise MusicXmlParseError(f"measure {m_index + 1}: negative duration")
    return value


def _first_text(elem: ET.Element, paths: Sequence[str]) -> Optional[str]:
    for path in paths:
        found = elem.find(path)
        if found is not None and found.text:
            return found.text.strip()
    return None


def _misc_field(root: ET.Element, name: str) -> Optional[str]:
    for f in root.findall("identification/miscellaneous/miscellaneous-field"):
        if f.get("name") == name and f.text:
            return f.text.strip()
    return None


def _fill_voice_gaps(raw: list[NoteEvent], start: Fraction, end: Fraction,
                     m_index: int) -> list[NoteEvent]:
    """Insert hidden rests so each voice is contiguous from measure start to end.

    Also rejects overlapping events within a voice (chord members excepted).
    Events are returned in a stable order: by onset, then staff, voice, with
    grace notes ahead of their principal and chord members after their root.
    """
    by_voice: dict[int, list[NoteEvent]] = {}
    for ev in raw:
        if not ev.grace:
            by_voice.setdefault(ev.voice, []).append(ev)
    filled = list(raw)
    for voice, evs in by_voice.items():
        groups: dict[Fraction, list[NoteEvent]] = {}
        for ev in evs:
            groups.setdefault(ev.onset, []).append(ev)
        cur = start
        staff_hint = evs[0].staff
        for onset in sorted(groups):
            group = groups[onset]
            if onset < cur:
                raise MusicXmlParseError(
                    f"measure {m_index + 1}: overlapping events in voice {voice}")
            if onset > cur:
                filled.append(NoteEvent(onset=cur, duration=onset - cur, pitch=None,
                                        voice=voice, staff=group[0].staff, hidden=True))
            root = next((e for e in group if not e.chord), group[0])
            cur = onset + root.duration
            staff_hint = group[-1].staff
        if cur < end:
            filled.append(NoteEvent(onset=cur, duration=end - cur, pitch=None,
                                    voice=voice, staff=staff_hint, hidden=True))
    return _sort_events(filled)


def _sort_events(events: list[NoteEvent]) -> list[NoteEvent]:
    decorated = [(ev.onset, ev.staff, ev.voice, not ev.grace, ev.chord, i, ev)
                 for i, ev in enumerate(events)]
    decorated.sort(key=lambda t: t[:6])
    return [t[-1] for t in decorated]


# ---------------------------------------------------------------------------
# Validation

def validate_two_staff(score: Score) -> Score:
    """Accept exactly the corpus shape: one part, two staves, nonempty."""
    if not score.measures:
        raise ValidationError("degenerate score: no measures")
    if score.n_staves != 2:
        raise ValidationError(
            f"corpus requires exactly two staves, found {score.n_staves}")
    staves = {ev.staff for ev in score.events()}
    if not staves <= {1, 2}:
        raise ValidationError(f"events on unsupported staves {sorted(staves)}")
    return replace(score, validated=True)


# ---------------------------------------------------------------------------
# Serialization

def serialize_musicxml(score: Score) -> bytes:
    """Write partwise MusicXML (UTF-8) that re-parses to an equivalent score."""
    root = ET.Element("score-partwise", version="4.0")
    if score.title:
        ET.SubElement(root, "movement-title").text = score.title
    misc_pairs = [(n, v) for n, v in (("genre", score.genre), ("source", score.source_id)) if v]
    if misc_pairs:
        ident = ET.SubElement(root, "identification")
        misc = ET.SubElement(ident, "miscellaneous")
        for name, value in misc_pairs:
            f = ET.SubElement(misc, "miscellaneous-field", name=name)
            f.text = value
    part_list = ET.SubElement(root, "part-list")
    sp = ET.SubElement(part_list, "score-part", id="P1")
    ET.SubElement(sp, "part-name").text = "Piano"
    part = ET.SubElement(root, "part", id="P1")

    prev_divisions = None
    for measure in score.measures:
        m_el = ET.SubElement(part, "measure", number=str(measure.index + 1))
        divisions = _measure_divisions(measure)
        attrs_needed = (divisions != prev_divisions or measure.key_fifths is not None
                        or measure.time_sig is not None or any(measure.clefs)
                        or measure.index == 0)
        if attrs_needed:
            attrs = ET.SubElement(m_el, "attributes")
            if divisions != prev_divisions:
                ET.SubElement(attrs, "divisions").text = str(divisions)
                prev_divisions = divisions
            if measure.key_fifths is not None:
                key = ET.SubElement(attrs, "key")
                ET.SubElement(key, "fifths").text = str(measure.key_fifths)
            if measure.time_sig is not None:
                time = ET.SubElement(attrs, "time")
                ET.SubElement(time, "beats").text = str(measure.time_sig[0])
                ET.SubElement(time, "beat-type").text = str(measure.time_sig[1])
            if measure.index == 0:
                ET.SubElement(attrs, "staves").text = str(score.n_staves)
            for staff_no, clef in enumerate(measure.clefs, start=1):
                if clef:
                    c = ET.SubElement(attrs, "clef", number=str(staff_no))
                    ET.SubElement(c, "sign").text = clef[:1]
                    if clef[1:]:
                        ET.SubElement(c, "line").text = clef[1:]
        _write_measure_events(m_el, measure, divisions)

    buf = io.BytesIO()
    ET.indent(root)
    tree = ET.ElementTree(root)
    tree.write(buf, encoding="UTF-8", xml_declaration=True)
    return buf.getvalue()


def write_musicxml(score: Score, path: str) -> None:
    with open(path, "wb") as fh:
        fh.write(serialize_musicxml(score))


def _measure_divisions(measure: Measure) -> int:
    denoms = [1]
    for ev in measure.events:
        if ev.grace:
            continue
        denoms.append(ev.duration.denominator)
        denoms.append((ev.onset - measure.start).denominator)
    return lcm(*denoms)


def _write_measure_events(m_el: ET.Element, measure: Measure, divisions: int) -> None:
    voices = sorted({ev.voice for ev in measure.events})
    cursor = Fraction(0)  # in quarters, relative to measure start
    for voice in voices:
        if cursor != 0:
            backup = ET.SubElement(m_el, "backup")
            ET.SubElement(backup, "duration").text = str(int(cursor * divisions))
            cursor = Fraction(0)
        evs = [ev for ev in measure.events if ev.voice == voice]
        groups: dict[Fraction, list[NoteEvent]] = {}
        for ev in evs:
            groups.setdefault(ev.onset, []).append(ev)
        for onset in sorted(groups):
            rel = onset - measure.start
            if rel > cursor:
                fwd = ET.SubElement(m_el, "forward")
                ET.SubElement(fwd, "duration").text = str(int((rel - cursor) * divisions))
                cursor = rel
            group = sorted(groups[onset], key=lambda e: (not e.grace, e.chord))
            first_sounding = True
            for ev in group:
                _write_note(m_el, ev, divisions, chord=not ev.grace and not first_sounding)
                if not ev.grace:
                    if first_sounding:
                        cursor = rel + ev.duration
                    first_sounding = False


def _write_note(m_el: ET.Element, ev: NoteEvent, divisions: int, chord: bool) -> None:
    note = ET.SubElement(m_el, "note")
    if ev.hidden:
        note.set("print-object", "no")
    if ev.grace:
        ET.SubElement(note, "grace")
    if chord:
        ET.SubElement(note, "chord")
    if ev.pitch is None:
        ET.SubElement(note, "rest")
    else:
        p = ET.SubElement(note, "pitch")
        ET.SubElement(p, "step").text = ev.pitch.step
        if ev.pitch.alter:
            ET.SubElement(p, "alter").text = str(ev.pitch.alter)
        ET.SubElement(p, "octave").text = str(ev.pitch.octave)
    if not ev.grace:
        ET.SubElement(note, "duration").text = str(int(ev.duration * divisions))
    for flag, kind in ((ev.tie_stop, "stop"), (ev.tie_start, "start")):
        if flag:
            ET.SubElement(note, "tie", type=kind)
    ET.SubElement(note, "voice").text = str(ev.voice)
    decomposed = type_for_duration(ev.duration)
    if decomposed is not None:
        name, dots, tuplet = decomposed
        ET.SubElement(note, "type").text = name
        for _ in range(dots):
            ET.SubElement(note, "dot")
        if tuplet is not None:
            tm = ET.SubElement(note, "time-modification")
            ET.SubElement(tm, "actual-notes").text = str(tuplet[0])
            ET.SubElement(tm, "normal-notes").text = str(tuplet[1])
    ET.SubElement(note, "staff").text = str(ev.staff)


# ---------------------------------------------------------------------------
# Timeline

@dataclass(frozen=True)
class TimelineSegment:
    start: Fraction
    end: Fraction
    pitches: tuple[Pitch, ...]  # sorted by midi number, deduplicated


def merged_sounding_intervals(score: Score) -> list[tuple[Fraction, Fraction, Pitch]]:
    """Sounding intervals of pitched notes with tie chains merged.

    A chain of tied events (same voice, staff and midi number, each link
    starting where the previous one ends) counts as one interval.  Grace
    notes are excluded.
    """
    chains: dict[tuple[int, int, int], list[NoteEvent]] = {}
    for ev in score.notes():
        chains.setdefault((ev.voice, ev.staff, ev.pitch.midi_number), []).append(ev)
    out: list[tuple[Fraction, Fraction, Pitch]] = []
    for evs in chains.values():
        evs.sort(key=lambda e: e.onset)
        open_start: Optional[Fraction] = None
        open_pitch: Optional[Pitch] = None
        prev: Optional[NoteEvent] = None
        for ev in evs:
            chained = (prev is not None and prev.tie_start and ev.tie_stop
                       and ev.onset == prev.end)
            if not chained:
                if open_start is not None:
                    out.append((open_start, prev.end, open_pitch))
                open_start, open_pitch = ev.onset, ev.pitch
            prev = ev
        if open_start is not None:
            out.append((open_start, prev.end, open_pitch))
    out.sort(key=lambda t: (t[0], t[1], t[2].midi_number))
    return out


def timeline(score: Score) -> list[TimelineSegment]:
    """Partition ``[0, total_duration)`` at every note onset and offset.

    Each segment lists the distinct pitches sounding throughout it, sorted
    by midi number.  Returns an empty list for an empty score.
    """
    if not score.measures:
        return []
    total = score.total_duration
    intervals = merged_sounding_intervals(score)
    bounds = {Fraction(0), total}
    for start, end, _ in intervals:
        bounds.add(start)
        bounds.add(min(end, total))
    cuts = sorted(bounds)
    segments = []
    for a, b in zip(cuts, cuts[1:]):
        active: dict[int, Pitch] = {}
        for start, end, pitch in intervals:
            if start <= a and end >= b and pitch.midi_number not in active:
                active[pitch.midi_number] = pitch
        segments.append(TimelineSegment(
            start=a, end=b,
            pitches=tuple(active[m] for m in sorted(active))))
    return segments
