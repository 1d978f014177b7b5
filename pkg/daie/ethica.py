from collections import defaultdict
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Dict, FrozenSet, Iterable, List, Mapping, Optional, Sequence, Set, Tuple, Union
import re

from lark import Lark, Transformer, v_args
from lark.exceptions import UnexpectedInput, VisitError

from . import logging
from .errors import (DuplicateNormId, EmptyCandidateSet, NoPermittedAction, ParseError, UnknownActionLabel,
                     UnknownAtom, UnknownStakeholder)
from .opinion import Opinion, comultiply, complement, discount, expected_probability, multiply


__all__ = ['Atom', 'Const', 'Not', 'And', 'Or', 'Implies', 'From', 'Formula', 'Modality', 'Norm', 'Conflict',
           'Verdicts', 'SymbolicState', 'parse_formula', 'parse_norms', 'format_formula', 'format_norm',
           'formula_atoms', 'eval_formula', 'holds', 'active_verdicts', 'violation_probability', 'filter_actions',
           'exclusions', 'obligation_penalties']


logger = logging.get_logger(__name__)


KEYWORDS = ('not', 'and', 'or', 'implies', 'true', 'false', 'From', 'norm', 'weight', 'when', 'then', 'obligate',
            'permit', 'forbid')
IDENTIFIER = r'[a-zA-Z_][a-zA-Z0-9_]*(\((?:[a-zA-Z0-9_]|\([a-zA-Z0-9_]*\))*\))*'

# Precedence, loosest first: implies (right-assoc) < or < and < not.
# An atom is an identifier with optional balanced argument groups nested at most twice, e.g. `f(g(x))`. Keywords
# never lex as atoms, so `not(a)` is a negation.
NORM_GRAMMAR = r"""
    ?formula: implication

    ?implication: disjunction
                | disjunction "implies" implication        -> implies_

    ?disjunction: conjunction
                | disjunction "or" conjunction             -> or_

    ?conjunction: negation
                | conjunction "and" negation               -> and_

    ?negation: "not" negation                              -> not_
             | primary

    ?primary: ATOM                                         -> atom
            | "true"                                       -> true
            | "false"                                      -> false
            | "From" "(" ATOM "," formula ")"              -> standpoint
            | "(" formula ")"

    norm: "norm" ATOM "weight" DECIMAL ":" "when" formula "then" modality ATOM

    !modality: "obligate" | "permit" | "forbid"

    DECIMAL: /[0-9]+(\.[0-9]+)?([eE][+-]?[0-9]+)?/

    %import common.WS
    %ignore WS
""" + f'    ATOM: /(?!(?:{"|".join(KEYWORDS)})\\b){IDENTIFIER}/\n'

ACTION_PATTERN = re.compile(IDENTIFIER)


@dataclass(frozen=True)
class Atom:
    name: str


@dataclass(frozen=True)
class Const:
    value: bool


@dataclass(frozen=True)
class Not:
    operand: 'Formula'


@dataclass(frozen=True)
class And:
    left: 'Formula'
    right: 'Formula'


@dataclass(frozen=True)
class Or:
    left: 'Formula'
    right: 'Formula'


@dataclass(frozen=True)
class Implies:
    left: 'Formula'
    right: 'Formula'


@dataclass(frozen=True)
class From:
    stakeholder: str
    operand: 'Formula'


Formula = Union[Atom, Const, Not, And, Or, Implies, From]


class Modality(str, Enum):
    OBLIGATION = 'obligate'
    PERMISSION = 'permit'
    PROHIBITION = 'forbid'


@dataclass(frozen=True)
class Norm:
    id: str
    condition: Formula
    modality: Modality
    action: str
    weight: float

    def __post_init__(self):
        object.__setattr__(self, 'modality', Modality(self.modality))

        if not self.weight >= 0:
            raise ValueError(f'Norm {self.id!r} has negative weight {self.weight}')

        if not ACTION_PATTERN.fullmatch(self.action):
            raise ValueError(f'Norm {self.id!r} has malformed action label {self.action!r}')

    def with_weight(self, weight: float) -> 'Norm':
        return Norm(self.id, self.condition, self.modality, self.action, weight)


def _contains_from(f: Formula) -> bool:
    if isinstance(f, From):
        return True

    if isinstance(f, Not):
        return _contains_from(f.operand)

    if isinstance(f, (And, Or, Implies)):
        return _contains_from(f.left) or _contains_from(f.right)

    return False


class _ToAst(Transformer):
    def atom(self, children):
        return Atom(str(children[0]))

    def true(self, _):
        return Const(True)

    def false(self, _):
        return Const(False)

    def not_(self, children):
        return Not(children[0])

    def and_(self, children):
        return And(children[0], children[1])

    def or_(self, children):
        return Or(children[0], children[1])

    def implies_(self, children):
        return Implies(children[0], children[1])

    @v_args(meta=True)
    def standpoint(self, meta, children):
        stakeholder, body = children

        if '(' in stakeholder:
            raise ParseError(f'Malformed stakeholder id {str(stakeholder)!r}', meta.line, meta.column, {'ATOM'})

        if _contains_from(body):
            raise ParseError('Standpoints may not nest inside another From(...)', meta.line, meta.column)

        return From(str(stakeholder), body)

    def modality(self, children):
        return Modality(str(children[0]))

    @v_args(meta=True)
    def norm(self, meta, children):
        norm_id, weight, condition, modality, action = children

        if '(' in norm_id:
            raise ParseError(f'Malformed norm id {str(norm_id)!r}', meta.line, meta.column, {'ATOM'})

        weight = float(weight)

        if not weight > 0:
            raise ParseError(f'Norm {str(norm_id)!r} needs a positive weight', meta.line, meta.column)

        return Norm(str(norm_id), condition, modality, str(action), weight)


_parser = None


def _get_parser() -> Lark:
    global _parser

    if _parser is None:
        _parser = Lark(NORM_GRAMMAR, start=['formula', 'norm'], parser='lalr', propagate_positions=True)

    return _parser


def _parse(text: str, start: str, line_offset: int = 0):
    try:
        tree = _get_parser().parse(text, start=start)
        return _ToAst().transform(tree)
    except UnexpectedInput as e:
        expected = getattr(e, 'expected', None) or getattr(e, 'allowed', None) or ()
        line, column = getattr(e, 'line', -1), getattr(e, 'column', -1)

        if line is None or line < 1:  # end of input
            lines = text.splitlines() or ['']
            line, column = len(lines), len(lines[-1]) + 1

        raise ParseError(f'Unexpected input in {start}', line + line_offset, column, expected) from None
    except VisitError as e:
        orig = e.orig_exc

        if isinstance(orig, ParseError):
            raise ParseError(orig.message, orig.line + line_offset, orig.column, orig.expected) from None

        raise orig from None


def parse_formula(text: str) -> Formula:
    return _parse(text, 'formula')


def formula_atoms(f: Formula) -> Set[str]:
    if isinstance(f, Atom):
        return {f.name}

    if isinstance(f, (Not, From)):
        return formula_atoms(f.operand)

    if isinstance(f, (And, Or, Implies)):
        return formula_atoms(f.left) | formula_atoms(f.right)

    return set()


def parse_norms(text: str, actions: Optional[Iterable[str]] = None,
                atoms: Optional[Iterable[str]] = None) -> List[Norm]:
    """
    Parses a norm file: one `norm <id> weight <w>: when <formula> then <modality> <action>` per line, `#` comments.
    When `actions`/`atoms` are given, every norm must reference only those.
    """
    actions = None if actions is None else set(actions)
    atoms = None if atoms is None else set(atoms)
    norms = []
    seen = {}

    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split('#', 1)[0]

        if not line.strip():
            continue

        norm = _parse(line, 'norm', line_offset=lineno - 1)

        if norm.id in seen:
            raise DuplicateNormId(f'Norm id {norm.id!r} on line {lineno} already declared on line {seen[norm.id]}')

        if actions is not None and norm.action not in actions:
            raise UnknownActionLabel(f'Norm {norm.id!r} references unknown action {norm.action!r}')

        if atoms is not None:
            unknown = sorted(formula_atoms(norm.condition) - atoms)

            if unknown:
                raise UnknownAtom(f'Norm {norm.id!r} references unknown atom {unknown[0]!r}')

        seen[norm.id] = lineno
        norms.append(norm)

    return norms


_PREC = {Implies: 1, Or: 2, And: 3, Not: 4}


def _prec(f: Formula) -> int:
    return _PREC.get(type(f), 5)


def format_formula(f: Formula) -> str:
    def wrap(child, parens):
        text = format_formula(child)
        return f'({text})' if parens else text

    if isinstance(f, Atom):
        return f.name

    if isinstance(f, Const):
        return 'true' if f.value else 'false'

    if isinstance(f, Not):
        return 'not ' + wrap(f.operand, _prec(f.operand) < 4)

    if isinstance(f, From):
        return f'From({f.stakeholder}, {format_formula(f.operand)})'

    if isinstance(f, Implies):
        return f'{wrap(f.left, _prec(f.left) <= 1)} implies {wrap(f.right, _prec(f.right) < 1)}'

    op, prec = ('and', 3) if isinstance(f, And) else ('or', 2)

    return f'{wrap(f.left, _prec(f.left) < prec)} {op} {wrap(f.right, _prec(f.right) <= prec)}'


def format_norm(norm: Norm) -> str:
    return (f'norm {norm.id} weight {norm.weight!r}: when {format_formula(norm.condition)} '
            f'then {norm.modality.value} {norm.action}')


@dataclass(frozen=True, eq=False)
class SymbolicState:
    """
    Graded valuation of atoms as seen by the deciding agent, per-stakeholder frames for `From`, and the trust held
    about each stakeholder.
    """
    atoms: Mapping[str, Opinion]
    frames: Mapping[str, Mapping[str, Opinion]] = field(default_factory=dict)
    trust: Mapping[str, Opinion] = field(default_factory=dict)


TRUE = Opinion(1.0, 0.0, 0.0)
FALSE = Opinion(0.0, 1.0, 0.0)


def _eval(f: Formula, atoms: Mapping[str, Opinion], state: SymbolicState) -> Opinion:
    if isinstance(f, Atom):
        try:
            return atoms[f.name]
        except KeyError:
            raise UnknownAtom(f'No opinion for atom {f.name!r}') from None

    if isinstance(f, Const):
        return TRUE if f.value else FALSE

    if isinstance(f, Not):
        return complement(_eval(f.operand, atoms, state))

    if isinstance(f, And):
        return multiply(_eval(f.left, atoms, state), _eval(f.right, atoms, state))

    if isinstance(f, Or):
        return comultiply(_eval(f.left, atoms, state), _eval(f.right, atoms, state))

    if isinstance(f, Implies):
        return comultiply(complement(_eval(f.left, atoms, state)), _eval(f.right, atoms, state))

    if isinstance(f, From):
        if f.stakeholder not in state.frames or f.stakeholder not in state.trust:
            raise UnknownStakeholder(f'No frame or trust opinion for stakeholder {f.stakeholder!r}')

        inner = _eval(f.operand, state.frames[f.stakeholder], state)
        return discount(state.trust[f.stakeholder], inner)

    raise TypeError(f'Not a formula: {f!r}')


def eval_formula(f: Formula, state: SymbolicState) -> Opinion:
    return _eval(f, state.atoms, state)


def holds(x: Opinion, theta: float) -> bool:
    if not 0 < theta <= 1:
        raise ValueError(f'Threshold must lie in (0, 1], got {theta}')

    return expected_probability(x) >= theta - 1e-12


@dataclass(frozen=True)
class Conflict:
    action: str
    obligation_weight: float
    prohibition_weight: float
    winner: Modality


@dataclass(frozen=True, eq=False)
class Verdicts:
    obligated: Mapping[str, float]
    forbidden: Mapping[str, Opinion]
    permitted: FrozenSet[str]
    conflicts: Tuple[Conflict, ...] = ()
    fired: Tuple[str, ...] = ()

    def __post_init__(self):
        if not set(self.obligated) <= set(self.permitted):
            raise ValueError(f'Obligated actions {sorted(set(self.obligated) - set(self.permitted))} not permitted')

        if set(self.forbidden) & set(self.permitted):
            raise ValueError(f'Actions both forbidden and permitted: {sorted(set(self.forbidden) & self.permitted)}')


Realizer = Callable[[str], FrozenSet[str]]


def _identity_realizer(candidate: str) -> FrozenSet[str]:
    return frozenset([candidate])


def active_verdicts(norms: Sequence[Norm], state: SymbolicState, theta: float, candidates: Iterable[str],
                    realizes: Optional[Realizer] = None) -> Verdicts:
    candidates = list(candidates)

    if not candidates:
        raise EmptyCandidateSet('At least one candidate action is required')

    realizes = realizes or _identity_realizer
    obligated: Dict[str, float] = defaultdict(float)
    prohibition_weight: Dict[str, float] = defaultdict(float)
    forbidden: Dict[str, Opinion] = {}
    permits = set()
    fired = []

    for norm in norms:
        opinion = eval_formula(norm.condition, state)

        if not holds(opinion, theta):
            continue

        fired.append(norm.id)

        if norm.modality is Modality.OBLIGATION:
            obligated[norm.action] += norm.weight
        elif norm.modality is Modality.PROHIBITION:
            prohibition_weight[norm.action] += norm.weight
            current = forbidden.get(norm.action)

            if current is None or expected_probability(opinion) > expected_probability(current):
                forbidden[norm.action] = opinion
        else:
            permits.add(norm.action)

    conflicts = []

    for action in sorted(set(obligated) & set(forbidden)):
        ow, fw = obligated[action], prohibition_weight[action]

        if ow > fw:
            winner = Modality.OBLIGATION
            del forbidden[action]
        else:
            winner = Modality.PROHIBITION  # ties go to the prohibition
            del obligated[action]

        conflicts.append(Conflict(action, ow, fw, winner))
        logger.info(f'Norm conflict on {action}: obligation {ow:g} vs prohibition {fw:g}, {winner.value} wins')

    universe = set().union(*(realizes(c) for c in candidates)) | set(obligated) | set(forbidden) | permits

    return Verdicts(
        obligated=dict(obligated),
        forbidden=forbidden,
        permitted=frozenset(universe - set(forbidden)),
        conflicts=tuple(conflicts),
        fired=tuple(fired)
    )


def violation_probability(norm: Norm, state: SymbolicState) -> float:
    return expected_probability(eval_formula(norm.condition, state))


def exclusions(candidates: Iterable[str], verdicts: Verdicts, tau: float,
               realizes: Optional[Realizer] = None) -> Dict[str, Tuple[str, float]]:
    """Maps each excluded candidate to the forbidden action it realizes and that prohibition's probability."""
    if not 0 < tau <= 1:
        raise ValueError(f'Exclusion threshold must lie in (0, 1], got {tau}')

    realizes = realizes or _identity_realizer
    excluded = {}

    for candidate in candidates:
        for action in sorted(realizes(candidate)):
            if action in verdicts.forbidden:
                prob = expected_probability(verdicts.forbidden[action])

                if prob >= tau - 1e-12:
                    excluded[candidate] = (action, prob)
                    break

    return excluded


def filter_actions(candidates: Iterable[str], verdicts: Verdicts, tau: float,
                   realizes: Optional[Realizer] = None) -> Tuple[FrozenSet[str], Dict[str, float]]:
    candidates = list(candidates)
    realizes = realizes or _identity_realizer
    excluded = exclusions(candidates, verdicts, tau, realizes)

    for candidate, (action, prob) in excluded.items():
        logger.debug(f'Excluded {candidate}: realizes forbidden {action} (p={prob:.3f})')

    allowed = frozenset(c for c in candidates if c not in excluded)

    if not allowed:
        raise NoPermittedAction(f'All {len(candidates)} candidates are forbidden at tau={tau}', verdicts=verdicts)

    return allowed, obligation_penalties(candidates, verdicts, realizes)


def obligation_penalties(candidates: Iterable[str], verdicts: Verdicts,
                         realizes: Optional[Realizer] = None) -> Dict[str, float]:
    """Summed weights of the active obligations each candidate fails to realize."""
    realizes = realizes or _identity_realizer
    obligated = list(verdicts.obligated.items())

    return {c: float(sum(w for action, w in obligated if action not in realizes(c))) for c in candidates}
