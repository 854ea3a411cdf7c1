"""Consistency checking and cautious query answering for probabilistic
databases under denial constraints, in exact rational arithmetic."""
from .consistency import Outcome, Verdict, check_consistency, oracle_check
from .constraint_lang import classify, classify_set, parse_constraints, parse_query
from .grounding import ConflictHypergraph, build_conflict_hypergraph
from .hypergraph_analysis import Shape, classify_component, components
from .model import PDBInstance, ProbabilityBound, load_instance
from .query_eval import AnswerSet, answer_query, membership

__all__ = [
    "AnswerSet",
    "ConflictHypergraph",
    "Outcome",
    "PDBInstance",
    "ProbabilityBound",
    "Shape",
    "Verdict",
    "answer_query",
    "build_conflict_hypergraph",
    "check_consistency",
    "classify",
    "classify_component",
    "classify_set",
    "components",
    "load_instance",
    "membership",
    "oracle_check",
    "parse_constraints",
    "parse_query",
]
