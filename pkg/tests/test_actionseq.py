import pytest
from hypothesis import assume, given, settings
from hypothesis import strategies as st

from conftest import FIGURE_TEXT, FIXTURES
from earthbt.actionseq import (ALWAYS, ActionSequence, ActionStatement, And, BadArity, ExprError, Leaf,
                               MissingFlag, Or, SequenceError, SequenceSyntaxError, UnknownSkill,
                               Unvalidated, analyze_flags, bind_flag, bind_flags, eval_expr, parse,
                               parse_expr, serialize, skills_table, to_text, validate)
from earthbt.actionseq.binding import BindingError
from oracles import all_assignments, truth_table_eval

# -- parser -----------------------------------------------------------------


def test_figure_parse(figure_seq):
    s = figure_seq.statements
    assert len(s) == 3
    assert [(x.index, x.skill, x.machine) for x in s] == [
        (1, "initial_pose", "excavator"), (2, "move", "dump_truck"),
        (3, "excavate_and_release", "excavator")]
    assert s[1].params == ("loading_site",)
    assert s[1].precondition == Leaf("EXCAVATOR_INITIAL_POSE_FLG", True)
    assert s[2].precondition == And((Leaf("DUMPTRUCK_AT_LOADING_SITE_FLG", True),
                                     Leaf("SENSING_ARRIVAL_FLG", True)))
    assert s[0].precondition == ALWAYS
    assert s[0].reasoning == "Return excavator to initial pose."
    assert [n for n, _ in figure_seq.generated_flags] == [
        "EXCAVATOR_INITIAL_POSE_FLG", "DUMPTRUCK_AT_LOADING_SITE_FLG"]


def test_figure_serializes_byte_identical(figure_seq):
    assert serialize(figure_seq) == FIGURE_TEXT


def test_leading_indentation_is_tolerated():
    text = "\n".join("   " + line for line in FIGURE_TEXT.splitlines())
    assert parse(text) == parse(FIGURE_TEXT)


def test_unknown_skill_reports_line():
    with pytest.raises(UnknownSkill) as e:
        parse("1. initial_pose(excavator)\n2. fly(excavator)\n")
    assert e.value.line == 2


def test_bad_arity():
    with pytest.raises(BadArity) as e:
        parse("1. move(dump_truck)\n")
    assert (e.value.got, e.value.want) == (1, 2)


@pytest.mark.parametrize("text,line,column", [
    ("1 initial_pose(excavator)", 1, 3),
    ("1. initial_pose(excavator) depends_on", 1, None),
    ("1. initial_pose(excavator) depends_on A_FLG==", 1, None),
    ("1. initial_pose(excavator)\n3. initial_pose(excavator)", 2, None),
    ("1. move(dump_truck, loading_site) depends_on (A_FLG==true", 1, None),
    ("1. initial_pose(excavator) when A_FLG==true", 1, None),
])
def test_syntax_errors_carry_position(text, line, column):
    with pytest.raises(SequenceSyntaxError) as e:
        parse(text)
    assert e.value.line == line
    assert e.value.column >= 1
    if column is not None:
        assert e.value.column == column
    assert e.value.expected


def test_statement_after_declarations_is_an_error():
    with pytest.raises(SequenceSyntaxError):
        parse("1. initial_pose(excavator)\n\nA_FLG: x\n2. initial_pose(excavator)\n")


def test_skills_table_lists_all_skills():
    table = skills_table()
    for name in ("move", "initial_pose", "excavate_and_release", "level", "gather", "dump_soil"):
        assert name in table


# -- expressions ------------------------------------------------------------

FLAGS = ["A_FLG", "B_FLG", "C_FLG", "D_FLG"]


def exprs():
    leaf = st.builds(Leaf, st.sampled_from(FLAGS), st.booleans())
    return st.recursive(leaf, lambda kids: st.one_of(
        st.builds(lambda t: And(tuple(t)), st.lists(kids, min_size=2, max_size=3)),
        st.builds(lambda t: Or(tuple(t)), st.lists(kids, min_size=2, max_size=3))), max_leaves=8)


@settings(max_examples=200, deadline=None)
@given(exprs())
def test_expr_text_round_trip(e):
    for style in ("dsl", "infix"):
        assert parse_expr(to_text(e, style)) == e


@settings(max_examples=200, deadline=None)
@given(exprs())
def test_eval_matches_truth_table(e):
    for style in ("dsl", "infix"):
        text = to_text(e, style)
        for values in all_assignments(FLAGS):
            assert eval_expr(e, values) == truth_table_eval(text, values)


def test_and_binds_tighter_than_or():
    e = parse_expr("A_FLG==true or B_FLG==true and C_FLG==true")
    assert isinstance(e, Or)
    v = {"A_FLG": False, "B_FLG": True, "C_FLG": False}
    assert eval_expr(e, v) is False
    assert truth_table_eval("A_FLG==true or B_FLG==true and C_FLG==true", v) is False


def test_missing_flag():
    with pytest.raises(MissingFlag):
        eval_expr(Leaf("A_FLG", True), {})


def test_expr_error_column():
    with pytest.raises(ExprError) as e:
        parse_expr("A_FLG==true and")
    assert e.value.column >= 1


@settings(max_examples=300, deadline=None)
@given(st.text(alphabet="AB_FLG=truefalsndo()&| 12#", max_size=40))
def test_parse_expr_total(text):
    """Any input either parses or raises ExprError; nothing else escapes."""
    try:
        parse_expr(text)
    except ExprError:
        pass


@settings(max_examples=300, deadline=None)
@given(st.text(max_size=120))
def test_parse_total(text):
    try:
        parse(text)
    except SequenceError:
        pass


# -- sequence round trip ----------------------------------------------------

MACHINES = ["excavator", "dump_truck"]
PLACES = ["loading_site", "dumping_site", "mound"]


@st.composite
def sequences(draw):
    n = draw(st.integers(1, 6))
    stmts = []
    for i in range(1, n + 1):
        skill = draw(st.sampled_from(["move", "initial_pose", "dump_soil", "excavate_and_release"]))
        machine = "dump_truck" if skill in ("move", "dump_soil") else "excavator"
        params = {"move": (draw(st.sampled_from(PLACES)),), "excavate_and_release": ("mound", "dump_truck")}
        pre = draw(st.one_of(st.just(ALWAYS), exprs()))
        why = draw(st.sampled_from(["", "go", "wait for the truck"]))
        stmts.append(ActionStatement(i, skill, machine, params.get(skill, ()), pre, why))
    flags = draw(st.lists(st.sampled_from(FLAGS), unique=True, max_size=3))
    return ActionSequence(tuple(stmts), tuple((f, f"about {f}") for f in flags))


@settings(max_examples=150, deadline=None)
@given(sequences())
def test_sequence_round_trip(seq):
    assert parse(serialize(seq)) == seq
    assert serialize(parse(serialize(seq))) == serialize(seq)


# -- validation -------------------------------------------------------------


def check(text, site):
    return validate(parse(text), site.machine_kinds, site.places, site.registry())


def test_figure_validates_clean(figure_seq, site):
    rep = validate(figure_seq, site.machine_kinds, site.places, site.registry())
    assert rep.ok, rep.format()
    assert rep.warnings == []


@pytest.mark.parametrize("text,code", [
    ("1. initial_pose(dump_truck)", "SkillKindMismatch"),
    ("1. initial_pose(bulldozer)", "UnknownMachine"),
    ("1. move(dump_truck, moon)", "UnknownPlace"),
    ("1. move(dump_truck, mound) depends_on GHOST_FLG==true", "UndeclaredFlag"),
    ("1. initial_pose(excavator)\n\nSENSING_ARRIVAL_FLG: dup", "DuplicateFlagDeclaration"),
    ("1. initial_pose(excavator)\n\nA_FLG: x\nA_FLG: y", "DuplicateFlagDeclaration"),
    ("1. initial_pose(excavator)\n2. move(dump_truck, mound) depends_on EXCAVATOR_FLYING_FLG==true"
     "\n\nEXCAVATOR_FLYING_FLG: x", "FlagUnbound"),
    ("1. initial_pose(excavator)\n2. initial_pose(excavator)\n3. move(dump_truck, mound) depends_on "
     "EXCAVATOR_INITIAL_POSE_FLG==true\n\nEXCAVATOR_INITIAL_POSE_FLG: x", "FlagAmbiguous"),
])
def test_validate_errors(text, code, site):
    assert code in check(text, site).codes()


def test_validate_warnings(site):
    rep = check("1. move(dump_truck, mound) depends_on EXCAVATOR_INITIAL_POSE_FLG==true\n"
                "2. initial_pose(excavator)\n3. initial_pose(excavator) depends_on "
                "EXCAVATOR_READY_2_FLG==true\n\n"
                "EXCAVATOR_INITIAL_POSE_1_FLG: never read\n"
                "EXCAVATOR_READY_2_FLG: same machine\n"
                "EXCAVATOR_INITIAL_POSE_FLG: x", site)
    codes = [w.code for w in rep.warnings]
    assert "UnusedFlag" in codes
    assert "FlagNeverSet" in codes


def test_report_json_shape(site):
    rep = check("1. initial_pose(dump_truck)", site)
    d = rep.to_dict()
    assert d["errors"][0]["code"] == "SkillKindMismatch"
    assert d["errors"][0]["where"] == 1


# -- binding ----------------------------------------------------------------


def test_binding_of_figure(figure_seq):
    bindings, errors = bind_flags(figure_seq)
    assert errors == []
    assert {k: b.statement for k, b in bindings.items()} == {
        "EXCAVATOR_INITIAL_POSE_FLG": 1, "DUMPTRUCK_AT_LOADING_SITE_FLG": 2}


def test_binding_prefix_variants_and_ordinals():
    seq = parse("1. move(dump_truck_1, loading_site)\n2. move(dump_truck_1, dumping_site)\n"
                "3. move(dump_truck_1, loading_site)\n4. initial_pose(excavator)\n")
    assert bind_flag("DUMPTRUCK1_AT_LOADING_SITE_2_FLG", seq).statement == 3
    assert bind_flag("DUMP_TRUCK_1_AT_DUMPING_SITE_FLG", seq).statement == 2
    assert bind_flag("EXCAVATOR_READY_FLG", seq).statement == 4
    with pytest.raises(BindingError):
        bind_flag("DUMPTRUCK1_AT_LOADING_SITE_FLG", seq)
    with pytest.raises(BindingError):
        bind_flag("DUMPTRUCK1_AT_LOADING_SITE_3_FLG", seq)


# -- redundant flags --------------------------------------------------------


def test_figure_has_no_redundant_flags(figure_seq):
    assert analyze_flags(figure_seq).nrf == 0


@pytest.mark.parametrize("name,reason", [
    ("redundant_duplicate", "DuplicateSemantics"),
    ("redundant_intra", "IntraMachineSuperfluous"),
])
def test_injected_redundancy(name, reason):
    result = analyze_flags(parse((FIXTURES / f"{name}.aseq").read_text()))
    assert result.nrf == 1
    assert result.redundant[0][1] == reason


def test_unused_flag_counts_as_superfluous():
    seq = parse("1. initial_pose(excavator)\n\nEXCAVATOR_INITIAL_POSE_FLG: nobody reads it")
    assert analyze_flags(seq).redundant == [("EXCAVATOR_INITIAL_POSE_FLG", "IntraMachineSuperfluous")]


def test_analyze_rejects_unbound():
    seq = parse("1. initial_pose(excavator)\n\nTRUCK_GONE_FLG: unbound")
    with pytest.raises(Unvalidated):
        analyze_flags(seq)


@settings(max_examples=100, deadline=None)
@given(st.lists(st.sampled_from(["a", "b"]), min_size=1, max_size=5))
def test_nrf_never_exceeds_declared_flags(pattern):
    lines, flags = [], []
    for i, who in enumerate(pattern, start=1):
        if who == "a":
            lines.append(f"{i}. initial_pose(excavator)")
        else:
            lines.append(f"{i}. dump_soil(dump_truck)")
    seq = parse("\n".join(lines))
    ex = [s.index for s in seq.statements if s.machine == "excavator"]
    assume(len(ex) == 1)
    flags = [("EXCAVATOR_INITIAL_POSE_FLG", "x")]
    seq = ActionSequence(seq.statements, tuple(flags))
    assert 0 <= analyze_flags(seq).nrf <= len(flags)
