import io

import pytest
from hypothesis import given, strategies as st

from cdsm.ingest import (
    Base, EventSequence, EventType, FormatError, IntegrityError, RawEvent, RowError,
    Scheme, SchemeConfig, categorize, collapse_runs, dropped_kinds, parse_progsnap2,
    read_sequences, write_sequences,
)

HEADER = "SubjectID,AssignmentID,Order,EventType,ServerTimestamp,EditType,X-BlockCategory\n"


def parse(body, header=HEADER, **kw):
    return parse_progsnap2(io.StringIO(header + body), **kw)


def ev(kind, subtype=None, category=None, order=0, subject="s1", assignment="A1", ts=None):
    return RawEvent(subject, assignment, order, kind, ts, subtype, category)


def types(*names):
    return tuple(EventType.parse(n) for n in names)


def test_parse_three_rows_in_order():
    rows = parse("s1,A1,0,File.Edit,1,Insert,\n"
                 "s1,A1,1,Run.Program,2,,\n"
                 "s1,A1,2,File.Edit,3,Delete,\n")
    assert [r.event_kind for r in rows] == ["File.Edit", "Run.Program", "File.Edit"]
    assert [r.order for r in rows] == [0, 1, 2]
    assert rows[0].edit_subtype == "Insert"
    assert rows[1].edit_subtype is None


def test_parse_sorts_by_order():
    rows = parse("s1,A1,2,Run.Program,,,\ns1,A1,0,File.Save,,,\ns1,A1,1,File.Edit,,Paste,\n")
    assert [r.order for r in rows] == [0, 1, 2]


def test_missing_event_column_names_it():
    with pytest.raises(FormatError, match="EventType column absent"):
        parse("s1,A1,0\n", header="SubjectID,AssignmentID,Order\n")


def test_non_integer_order_reports_line():
    with pytest.raises(RowError) as info:
        parse("s1,A1,0,Run.Program,,,\ns1,A1,x,Run.Program,,,\n")
    assert info.value.line == 3


def test_duplicate_order_is_integrity_error():
    with pytest.raises(IntegrityError):
        parse("s1,A1,0,Run.Program,,,\ns1,A1,0,File.Save,,,\n")


def test_custom_columns_and_iso_timestamps():
    config = SchemeConfig.from_mapping({"subject_col": "Student", "delimiter": ";"})
    rows = parse("s9;A1;0;Run.Program;2024-01-01T00:00:00Z;;\n",
                 header="Student;AssignmentID;Order;EventType;ServerTimestamp;EditType;X-BlockCategory\n",
                 config=config)
    assert rows[0].subject_id == "s9"
    assert rows[0].timestamp == pytest.approx(1704067200000.0)


def test_unknown_mapping_key():
    with pytest.raises(FormatError):
        SchemeConfig.from_mapping({"nope": "x"})


def test_edit_subtypes_and_run():
    seqs = categorize([ev("File.Edit", "Insert", order=0), ev("Run.Program", order=1)])
    assert seqs[0].events == types("EDIT-INS", "RUN")


def test_contextual_suffix_after_category_change():
    seqs = categorize([ev("X-ChangeBlockCategory", category="pen", order=0),
                       ev("File.Edit", "Insert", order=1)], Scheme.CONTEXTUAL)
    assert [str(e) for e in seqs[0].events] == ["CHAN", "EDIT-INS-pen"]


def test_no_suffix_before_first_category_change():
    seqs = categorize([ev("Run.Program", order=0),
                       ev("X-ChangeBlockCategory", category="looks", order=1),
                       ev("Run.Program", order=2)], "contextual")
    assert [str(e) for e in seqs[0].events] == ["RUN", "CHAN", "RUN-looks"]


def test_file_kinds_collapse_to_one_file():
    seqs = categorize([ev("File.Save", order=0), ev("File.Close", order=1)])
    assert seqs[0].events == types("FILE")


def test_mapping_table():
    kinds = [("File.Edit", None, "EDIT"), ("File.Edit", "Move", "EDIT"), ("File.Edit", "Paste", "EDIT-PST"),
             ("File.Edit", "Delete", "EDIT-DEL"), ("File.Create", None, "FILE"),
             ("X-AddVariable", None, "VAR"), ("X-ChangeBlockCategory", None, "CHAN")]
    for kind, sub, expected in kinds:
        assert str(categorize([ev(kind, sub)])[0].events[0]) == expected


def test_unmapped_kinds_dropped_and_counted():
    raw = [ev("Session.Start", order=0), ev("Run.Program", order=1), ev("Submit", order=2)]
    assert categorize(raw)[0].events == types("RUN")
    assert dropped_kinds(raw) == {"Session.Start": 1, "Submit": 1}


def test_one_sequence_per_subject_assignment():
    raw = [ev("Run.Program", subject="a", assignment="A1"),
           ev("Run.Program", subject="a", assignment="A2"),
           ev("Run.Program", subject="b", assignment="A1")]
    keys = [(s.subject_id, s.assignment_id) for s in categorize(raw)]
    assert keys == [("a", "A1"), ("a", "A2"), ("b", "A1")]


def test_collapse_examples():
    E, R = EventType(Base.EDIT), EventType(Base.RUN)
    assert collapse_runs([E, E, R]) == [E, R]
    assert collapse_runs([]) == []
    assert collapse_runs([R, E, R]) == [R, E, R]


def test_timestamps_span_collapsed_runs():
    seqs = categorize([ev("File.Edit", order=0, ts=10.0), ev("File.Edit", order=1, ts=20.0),
                       ev("Run.Program", order=2, ts=30.0)])
    assert seqs[0].timestamps == ((10.0, 20.0), (30.0, 30.0))


def test_raw_stats_count_before_collapse():
    seqs = categorize([ev("File.Edit", "Delete", order=0), ev("File.Edit", "Delete", order=1),
                       ev("Run.Program", order=2)])
    assert seqs[0].raw.deletions == 2
    assert seqs[0].raw.runs == 1
    assert seqs[0].raw.minutes is None


def test_sequence_rejects_adjacent_duplicates():
    with pytest.raises(ValueError):
        EventSequence("s", "A1", types("RUN", "RUN"))


def test_event_type_parse_prefers_longest_base():
    assert EventType.parse("EDIT-INS-pen") == EventType(Base.EDIT_INS, "pen")
    assert EventType.parse("EDIT-looks") == EventType(Base.EDIT, "looks")
    with pytest.raises(ValueError):
        EventType.parse("JUMP")


def test_jsonl_round_trip():
    seqs = categorize([ev("X-ChangeBlockCategory", category="pen", order=0, ts=1.0),
                       ev("File.Edit", "Insert", order=1, ts=2.0)], "contextual")
    buf = io.StringIO()
    write_sequences(seqs, buf)
    back = read_sequences(io.StringIO(buf.getvalue()))
    assert back == seqs
    assert back[0].raw == seqs[0].raw


# -- properties ---------------------------------------------------------------

symbols = st.sampled_from([EventType(b) for b in Base])


@given(st.lists(symbols, max_size=30))
def test_collapse_idempotent(seq):
    once = collapse_runs(seq)
    assert collapse_runs(once) == once


@given(st.lists(symbols, max_size=30))
def test_collapse_is_subsequence_without_repeats(seq):
    out = collapse_runs(seq)
    it = iter(seq)
    assert all(any(x == y for y in it) for x in out)
    assert all(a != b for a, b in zip(out, out[1:]))


kinds = st.sampled_from([
    ("File.Edit", "Insert"), ("File.Edit", "Delete"), ("File.Edit", "Paste"), ("File.Edit", None),
    ("Run.Program", None), ("File.Save", None), ("X-AddVariable", None),
    ("X-ChangeBlockCategory", "pen"), ("X-ChangeBlockCategory", "looks"), ("Other", None),
])


@given(st.lists(kinds, max_size=40))
def test_contextual_agrees_with_general_after_erasing(rows):
    raw = []
    for i, (kind, extra) in enumerate(rows):
        if kind == "X-ChangeBlockCategory":
            raw.append(ev(kind, category=extra, order=i))
        else:
            raw.append(ev(kind, extra, order=i))
    general = categorize(raw, "general")
    contextual = categorize(raw, "contextual")
    assert len(general) == len(contextual)
    for g, c in zip(general, contextual):
        assert collapse_runs([e.bare() for e in c.events]) == list(g.events)
        assert all(a != b for a, b in zip(c.events, c.events[1:]))
