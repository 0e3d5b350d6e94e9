"""
Enveloping Calculus - filtered differential operators in PBW normal form

An operator is a finite sum sum_a c_a(x) X^a where X^a is the ordered monomial
of the patch frame (letters sorted by filtration degree, then frame index).
Products are brought back to normal form by two rewriting rules:

    X_j f = f X_j + X_j(f)                      (Leibniz)
    X_a X_b = X_b X_a + sum_k f_ab^k(x) X_k     (frame brackets)

Cosymbols live in the graded enveloping algebra at each point: coefficients
are frozen and only the grading-compatible bracket terms are kept.
"""

import logging
from dataclasses import dataclass
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import sympy

from calculus.errors import PatchMismatchError, WeightUndefinedError
from calculus.filtered_patch import FilteredPatch, bracket_coefficients

logger = logging.getLogger(__name__)

MultiIndex = Tuple[int, ...]
Word = Tuple[int, ...]


def _canon(expr) -> sympy.Expr:
    return sympy.expand(sympy.sympify(expr))


def h_weight(patch: FilteredPatch, a: MultiIndex) -> int:
    """Homogeneous order |a|_H = sum_j a_j d_j."""
    return sum(aj * dj for aj, dj in zip(a, patch.orders))


def _letter_key(patch: FilteredPatch, j: int) -> Tuple[int, int]:
    return (patch.orders[j], j)


def pbw_letters(patch: FilteredPatch) -> Tuple[int, ...]:
    """Frame indices in PBW order: lower filtration degree first, then frame index."""
    return tuple(sorted(range(patch.dim), key=lambda j: _letter_key(patch, j)))


def word_of(patch: FilteredPatch, a: MultiIndex) -> Word:
    word: Tuple[int, ...] = ()
    for j in pbw_letters(patch):
        word += (j,) * a[j]
    return word


def multi_index_of(patch: FilteredPatch, word: Word) -> MultiIndex:
    counts = [0] * patch.dim
    for letter in word:
        counts[letter] += 1
    return tuple(counts)


def _first_inversion(patch: FilteredPatch, word: Word) -> Optional[int]:
    for pos in range(len(word) - 1):
        if _letter_key(patch, word[pos]) > _letter_key(patch, word[pos + 1]):
            return pos
    return None


def word_times_function(patch: FilteredPatch, word: Word, f: sympy.Expr) -> List[Tuple[sympy.Expr, Word]]:
    """
    Expand X_{w1} ... X_{wr} o f as sum of g * X^{w'} with functions moved to the left.
    """
    if not word:
        return [(f, ())]
    head, rest = word[0], word[1:]
    out: List[Tuple[sympy.Expr, Word]] = []
    for g, w in word_times_function(patch, rest, f):
        derivative = _canon(patch.apply_field(head, g))
        if derivative != 0:
            out.append((derivative, w))
        out.append((g, (head,) + w))
    return out


def _accumulate(table: Dict[Word, sympy.Expr], word: Word, coeff: sympy.Expr) -> None:
    table[word] = table.get(word, sympy.Integer(0)) + coeff


def _normalize(patch: FilteredPatch, words: Dict[Word, sympy.Expr], graded: bool) -> Dict[MultiIndex, sympy.Expr]:
    """
    Rewrite a sum of words to PBW normal form.

    With `graded` the coefficients are treated as frozen constants and only the
    bracket components with d_k = d_a + d_b are kept.
    """
    d = patch.orders
    result: Dict[MultiIndex, sympy.Expr] = {}
    pending = dict(words)
    while pending:
        word, coeff = pending.popitem()
        coeff = _canon(coeff)
        if coeff == 0:
            continue
        pos = _first_inversion(patch, word)
        if pos is None:
            key = multi_index_of(patch, word)
            result[key] = result.get(key, sympy.Integer(0)) + coeff
            continue
        a, b = word[pos], word[pos + 1]
        left, right = word[:pos], word[pos + 2:]
        _accumulate(pending, left + (b, a) + right, coeff)
        for k, fk in enumerate(bracket_coefficients(patch, a, b)):
            if fk == 0 or (graded and d[k] != d[a] + d[b]):
                continue
            if graded:
                _accumulate(pending, left + (k,) + right, coeff * fk)
            else:
                for g, w in word_times_function(patch, left, fk):
                    _accumulate(pending, w + (k,) + right, coeff * g)
    cleaned = {}
    for key, coeff in result.items():
        coeff = _canon(coeff)
        if coeff != 0:
            cleaned[key] = coeff
    return cleaned


def _sorted_terms(terms: Dict[MultiIndex, sympy.Expr]) -> Tuple[Tuple[MultiIndex, sympy.Expr], ...]:
    return tuple(sorted(terms.items(), key=lambda item: item[0]))


@dataclass(frozen=True)
class FilteredDiffOp:
    """
    Differential operator sum_a c_a(x) X^a in PBW normal form.

    Build instances with `from_terms`, which drops zero coefficients and fixes
    the term order, so equal operators compare equal.
    """

    patch: FilteredPatch
    terms: Tuple[Tuple[MultiIndex, sympy.Expr], ...]

    @classmethod
    def from_terms(cls, patch: FilteredPatch, terms: Dict[MultiIndex, object]) -> "FilteredDiffOp":
        cleaned = {}
        for a, c in terms.items():
            if len(a) != patch.dim:
                raise ValueError(f"multi-index {a} does not match patch dimension {patch.dim}")
            c = _canon(c)
            if c != 0:
                cleaned[tuple(int(v) for v in a)] = c
        return cls(patch, _sorted_terms(cleaned))

    @classmethod
    def from_words(cls, patch: FilteredPatch, words: Dict[Word, object]) -> "FilteredDiffOp":
        """Normal form of an arbitrary (unordered) sum of coefficient * word."""
        return cls(patch, _sorted_terms(_normalize(patch, {w: sympy.sympify(c) for w, c in words.items()}, graded=False)))

    @property
    def h_order(self) -> Optional[int]:
        if not self.terms:
            return None
        return max(h_weight(self.patch, a) for a, _ in self.terms)

    def is_zero(self) -> bool:
        return not self.terms

    def coefficient(self, a: MultiIndex) -> sympy.Expr:
        return dict(self.terms).get(tuple(a), sympy.Integer(0))

    def _check_patch(self, other: "FilteredDiffOp") -> None:
        if other.patch != self.patch:
            raise PatchMismatchError(
                f"operators live on different patches ({self.patch.name!r} vs {other.patch.name!r})"
            )

    def __add__(self, other: "FilteredDiffOp") -> "FilteredDiffOp":
        self._check_patch(other)
        total: Dict[MultiIndex, sympy.Expr] = dict(self.terms)
        for a, c in other.terms:
            total[a] = total.get(a, sympy.Integer(0)) + c
        return FilteredDiffOp.from_terms(self.patch, total)

    def __neg__(self) -> "FilteredDiffOp":
        return FilteredDiffOp(self.patch, tuple((a, -c) for a, c in self.terms))

    def __sub__(self, other: "FilteredDiffOp") -> "FilteredDiffOp":
        return self + (-other)

    def __rmul__(self, f) -> "FilteredDiffOp":
        """Left multiplication by a function of x."""
        return FilteredDiffOp.from_terms(self.patch, {a: sympy.sympify(f) * c for a, c in self.terms})

    def __matmul__(self, other: "FilteredDiffOp") -> "FilteredDiffOp":
        return compose(self, other)


def identity(patch: FilteredPatch) -> FilteredDiffOp:
    return FilteredDiffOp.from_terms(patch, {(0,) * patch.dim: 1})


def multiplication(patch: FilteredPatch, f) -> FilteredDiffOp:
    return FilteredDiffOp.from_terms(patch, {(0,) * patch.dim: f})


def frame_field(patch: FilteredPatch, j: int) -> FilteredDiffOp:
    return FilteredDiffOp.from_terms(patch, {tuple(int(k == j) for k in range(patch.dim)): 1})


def sublaplacian(patch: FilteredPatch) -> FilteredDiffOp:
    """-(sum of squares of the degree-1 frame fields)."""
    terms = {}
    for j, d in enumerate(patch.orders):
        if d == 1:
            terms[tuple(2 if k == j else 0 for k in range(patch.dim))] = -1
    return FilteredDiffOp.from_terms(patch, terms)


def compose(A: FilteredDiffOp, B: FilteredDiffOp) -> FilteredDiffOp:
    """
    PBW-normalized product A o B.

    Raises:
        PatchMismatchError: A and B live on different patches
    """
    A._check_patch(B)
    patch = A.patch
    words: Dict[Word, sympy.Expr] = {}
    for a, ca in A.terms:
        for b, cb in B.terms:
            tail = word_of(patch, b)
            for g, w in word_times_function(patch, word_of(patch, a), cb):
                _accumulate(words, w + tail, ca * g)
    product = FilteredDiffOp(patch, _sorted_terms(_normalize(patch, words, graded=False)))
    logger.debug("composed operators of orders %s and %s -> %s", A.h_order, B.h_order, product.h_order)
    return product


def apply_operator(A: FilteredDiffOp, f) -> sympy.Expr:
    """sum_a c_a X^a f for a symbolic function f of the patch coordinates."""
    f = sympy.sympify(f)
    total = sympy.Integer(0)
    for a, c in A.terms:
        value = f
        for letter in reversed(word_of(A.patch, a)):
            value = A.patch.apply_field(letter, value)
        total += c * value
    return _canon(total)


@dataclass(frozen=True)
class Cosymbol:
    """Weight-m element sum_{|a|_H = m} c_a(x) Xbar^a of the graded enveloping algebra."""

    patch: FilteredPatch
    weight: int
    terms: Tuple[Tuple[MultiIndex, sympy.Expr], ...]

    def is_zero(self) -> bool:
        return not self.terms

    def at(self, x: Sequence) -> Dict[MultiIndex, sympy.Expr]:
        """Coefficients frozen at a base point."""
        substitution = dict(zip(self.patch.coords, [sympy.nsimplify(v) for v in x]))
        return {a: _canon(c.subs(substitution)) for a, c in self.terms}


def principal_cosymbol(A: FilteredDiffOp, order: Optional[int] = None) -> Cosymbol:
    """
    Keep exactly the terms of H-order m.

    Args:
        A: operator
        order: intended order; defaults to h_order(A)

    Raises:
        WeightUndefinedError: A is zero and no order is given
    """
    m = order if order is not None else A.h_order
    if m is None:
        raise WeightUndefinedError("the zero operator has no H-order; pass order explicitly")
    kept = tuple((a, c) for a, c in A.terms if h_weight(A.patch, a) == m)
    return Cosymbol(A.patch, m, kept)


def cosymbol_compose(u: Cosymbol, v: Cosymbol) -> Cosymbol:
    """
    Product in the graded enveloping algebra; weights add.

    Raises:
        PatchMismatchError: u and v live on different patches
    """
    if u.patch != v.patch:
        raise PatchMismatchError("cosymbols live on different patches")
    patch = u.patch
    words: Dict[Word, sympy.Expr] = {}
    for a, ca in u.terms:
        for b, cb in v.terms:
            _accumulate(words, word_of(patch, a) + word_of(patch, b), ca * cb)
    return Cosymbol(patch, u.weight + v.weight, _sorted_terms(_normalize(patch, words, graded=True)))


@dataclass(frozen=True)
class KernelTerm:
    """One summand t^p c_a(x) delta^(a)(-xi) of a kernel family."""

    coeff: sympy.Expr
    multi_index: MultiIndex
    t_power: int


@dataclass(frozen=True)
class SymbolicKernelFamily:
    """
    Tangent-groupoid kernel family of a differential operator.

    `smooth_terms` holds smooth density summands (functions of x, xi, t); a
    differential operator's family has none.
    """

    patch: FilteredPatch
    weight: int
    terms: Tuple[KernelTerm, ...]
    smooth_terms: Tuple[sympy.Expr, ...] = ()

    def with_smooth_term(self, expr) -> "SymbolicKernelFamily":
        return SymbolicKernelFamily(self.patch, self.weight, self.terms, self.smooth_terms + (sympy.sympify(expr),))

    def restrict(self, t) -> List[Tuple[sympy.Expr, MultiIndex]]:
        """Distributional terms at a fixed t (zero coefficients dropped)."""
        out = []
        for term in self.terms:
            coeff = _canon(term.coeff * sympy.sympify(t) ** term.t_power)
            if coeff != 0:
                out.append((coeff, term.multi_index))
        return out

    def cosymbol_terms(self) -> List[Tuple[sympy.Expr, MultiIndex]]:
        return self.restrict(0)

    def apply(self, f, t=1) -> sympy.Expr:
        """Pair the family at t with a test function through frame derivatives."""
        total = sympy.Integer(0)
        for coeff, a in self.restrict(t):
            value = sympy.sympify(f)
            for letter in reversed(word_of(self.patch, a)):
                value = self.patch.apply_field(letter, value)
            total += coeff * value
        return _canon(total)


def kernel_family(A: FilteredDiffOp, order: Optional[int] = None) -> SymbolicKernelFamily:
    """
    The family sum_a t^(m - |a|_H) c_a(x) delta^(a)(-xi), m = h_order(A).

    A zero operator gives an empty family of the supplied order (0 if none).
    """
    m = order if order is not None else A.h_order
    if m is None:
        m = 0
    terms = tuple(
        KernelTerm(c, a, m - h_weight(A.patch, a)) for a, c in A.terms
    )
    return SymbolicKernelFamily(A.patch, m, terms)


def is_homogeneous_on_nose(F: SymbolicKernelFamily, m: int) -> bool:
    """True iff every term has t-power + |a|_H = m, no negative t-power and no smooth remainder."""
    if any(_canon(s) != 0 for s in F.smooth_terms):
        return False
    return all(
        term.t_power >= 0 and term.t_power + h_weight(F.patch, term.multi_index) == m
        for term in F.terms
    )


def _monomial_text(patch: FilteredPatch, a: MultiIndex) -> str:
    parts = []
    for j in pbw_letters(patch):
        if a[j] == 1:
            parts.append(patch.frame_names[j])
        elif a[j] > 1:
            parts.append(f"{patch.frame_names[j]}**{a[j]}")
    return "*".join(parts)


def _ordered(patch: FilteredPatch, terms: Iterable[Tuple[MultiIndex, sympy.Expr]]):
    return sorted(terms, key=lambda item: (-h_weight(patch, item[0]), item[0]))


def format_operator(A: FilteredDiffOp) -> str:
    """Deterministic text of the normal form, highest H-order first."""
    if not A.terms:
        return "0"
    pieces = []
    for a, c in _ordered(A.patch, A.terms):
        monomial = _monomial_text(A.patch, a)
        coeff = sympy.sstr(c)
        if not monomial:
            pieces.append(f"({coeff})")
        elif c == 1:
            pieces.append(monomial)
        else:
            pieces.append(f"({coeff})*{monomial}")
    return " + ".join(pieces)


def format_cosymbol(u: Cosymbol) -> str:
    if not u.terms:
        return "0"
    pieces = []
    for a, c in _ordered(u.patch, u.terms):
        monomial = "*".join(f"{part}bar" if "**" not in part else part.replace("**", "bar**")
                            for part in _monomial_text(u.patch, a).split("*") if part) or "1"
        pieces.append(monomial if c == 1 else f"({sympy.sstr(c)})*{monomial}")
    return " + ".join(pieces)


def format_kernel_family(F: SymbolicKernelFamily) -> str:
    if not F.terms and not F.smooth_terms:
        return "0"
    pieces = []
    for term in sorted(F.terms, key=lambda s: (s.t_power, s.multi_index)):
        t_part = "" if term.t_power == 0 else ("t*" if term.t_power == 1 else f"t**{term.t_power}*")
        coeff = "" if term.coeff == 1 else f"({sympy.sstr(term.coeff)})*"
        pieces.append(f"{t_part}{coeff}delta{list(term.multi_index)}(-xi)")
    pieces.extend(f"({sympy.sstr(s)})" for s in F.smooth_terms)
    return " + ".join(pieces)
