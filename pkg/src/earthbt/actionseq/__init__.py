"""Action Sequence DSL: parse, validate, serialize and analyze multi-machine plans."""
from .analysis import FlagAnalysis, Unvalidated, analyze_flags
from .binding import Binding, BindingError, bind_flag, bind_flags, flag_prefix
from .expr import ALWAYS, And, ExprError, FlagExpr, Leaf, MissingFlag, Or, eval_expr, parse_expr, to_text
from .model import ActionSequence, ActionStatement
from .parser import BadArity, SequenceError, SequenceSyntaxError, UnknownSkill, parse, serialize
from .skills import SKILLS, MachineKind, ParamKind, SkillSignature, skills_table
from .validate import Problem, ValidationReport, is_sensed, validate

__all__ = [
    "ALWAYS", "ActionSequence", "ActionStatement", "And", "BadArity", "Binding", "BindingError",
    "ExprError", "FlagAnalysis", "FlagExpr", "Leaf", "MachineKind", "MissingFlag", "Or",
    "ParamKind", "Problem", "SKILLS", "SequenceError", "SequenceSyntaxError", "SkillSignature",
    "UnknownSkill", "Unvalidated", "ValidationReport", "analyze_flags", "bind_flag", "bind_flags",
    "eval_expr", "flag_prefix", "is_sensed", "parse", "parse_expr", "serialize", "skills_table",
    "to_text", "validate",
]
