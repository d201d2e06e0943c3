"""
observables.py
──────────────
Turns trajectory averages into physical expectation values, entanglement
and steering witnesses, and jackknife error bars.

Positive-P averages of α-products are normally-ordered expectation values:
    mean(α_j⁺^m α_k^n) → ⟨a_j†^m a_k^n⟩
so every quantity here is a function of a handful of ensemble means. A
moment is identified by its Monomial, the tuple of exponents of the six
variables in storage order (a1, a1p, a2, a2p, a3, a3p).

Witnesses:
  E_HZ = ⟨N1 N3⟩ − |⟨a1† a3⟩|²                    < 0 → entangled
  ξ13  = ⟨a1†a3⟩⟨a3†a1⟩ − ⟨N1 (N3 + 1/2)⟩         > 0 → mode 3 steers mode 1
  ξ31  = ⟨a1†a3⟩⟨a3†a1⟩ − ⟨N3 (N1 + 1/2)⟩         > 0 → mode 1 steers mode 3
  N-mode form: |⟨a_f† Π a_j⟩|² − ⟨N_f Π (N_j + 1/2)⟩, f the first-listed mode
"""

import itertools
from collections.abc import Mapping, Sequence
from dataclasses import dataclass, field
from typing import Callable, Optional, Union

import numpy as np

from .model import StateKind
from .phasespace import FIELDS, RngStream, sample_coherent, sample_fock


Monomial = tuple[int, int, int, int, int, int]


class UnsupportedMomentError(ValueError):
    """A witness needs moments that were not accumulated for this run."""


# ── MONOMIALS ─────────────────────────────────────────────────────────────────

def _slot(mode: int, plus: bool) -> int:
    if mode not in (1, 2, 3):
        raise ValueError(f"mode must be 1, 2 or 3, got {mode}")
    return 2 * (mode - 1) + (1 if plus else 0)


def monomial(plain: Sequence[int] = (), plus: Sequence[int] = ()) -> Monomial:
    """Exponent tuple of Π α_j⁺ (j in plus) · Π α_k (k in plain)."""
    exps = [0] * len(FIELDS)
    for mode in plain:
        exps[_slot(mode, False)] += 1
    for mode in plus:
        exps[_slot(mode, True)] += 1
    return tuple(exps)


def number_monomial(*modes: int) -> Monomial:
    """⟨Π N_j⟩ over distinct modes (already normally ordered)."""
    if len(set(modes)) != len(modes):
        raise ValueError("number products are only normally ordered for distinct modes")
    return monomial(plain=modes, plus=modes)


def conjugate_monomial(m: Monomial) -> Monomial:
    """Swap α_j ↔ α_j⁺; the estimator of the Hermitian-conjugate operator."""
    return (m[1], m[0], m[3], m[2], m[5], m[4])


M11   = number_monomial(1)
M22   = number_monomial(2)
M33   = number_monomial(3)
M13   = monomial(plain=(3,), plus=(1,))        # α1⁺ α3 → ⟨a1† a3⟩
M31   = monomial(plain=(1,), plus=(3,))        # α3⁺ α1 → ⟨a3† a1⟩
M1133 = number_monomial(1, 3)

CORE_MOMENTS: dict[str, Monomial] = {
    "m11":   M11,
    "m22":   M22,
    "m33":   M33,
    "m13":   M13,
    "m31":   M31,
    "m1133": M1133,
}


def monomial_values(z: np.ndarray, m: Monomial) -> np.ndarray:
    """Evaluate a monomial on phase-space data whose first axis is the variable index."""
    out = np.ones(z.shape[1:], dtype=complex)
    for index, power in enumerate(m):
        if power == 1:
            out = out * z[index]
        elif power > 1:
            out = out * z[index] ** power
    return out


def steering_monomials(ordering: Sequence[int]):
    """
    Monomials behind the N-mode steering inequality for `ordering`.
    Returns (product, conjugate product, [(coefficient, number monomial), ...])
    where the list expands ⟨N_f Π_j (N_j + 1/2)⟩, largest products first.
    """
    ordering = tuple(ordering)
    if len(ordering) < 2 or len(set(ordering)) != len(ordering):
        raise ValueError(f"ordering must list at least two distinct modes, got {ordering}")
    first, others = ordering[0], ordering[1:]

    product = monomial(plain=others, plus=(first,))
    terms   = []
    for size in range(len(others), -1, -1):
        for subset in itertools.combinations(others, size):
            coefficient = 0.5 ** (len(others) - size)
            terms.append((coefficient, number_monomial(first, *subset)))
    return product, conjugate_monomial(product), terms


def required_monomials(tripartite: bool = False) -> list[Monomial]:
    """
    Moments accumulated by a run. The optional set covers every ordering of
    two or three modes, so pairs involving the middle well work as well.
    """
    wanted = list(CORE_MOMENTS.values())
    if tripartite:
        orderings = itertools.chain(itertools.permutations((1, 2, 3), 2), itertools.permutations((1, 2, 3)))
        for ordering in orderings:
            product, conjugate, terms = steering_monomials(ordering)
            wanted.extend([product, conjugate] + [m for _, m in terms])
    return list(dict.fromkeys(wanted))


# ── RECORDS ───────────────────────────────────────────────────────────────────

@dataclass
class MomentRecord:
    """
    Accumulated raw moments at each sample time.
    batch_sums[m] has shape (n_batches, n_times); batch_counts holds the
    surviving trajectories per batch.
    """
    times:        np.ndarray
    batch_sums:   dict
    batch_counts: np.ndarray
    n_diverged:   int = 0
    means:        dict = field(init=False)

    def __post_init__(self):
        self.batch_counts = np.asarray(self.batch_counts, dtype=np.int64)
        total = self.n_effective
        with np.errstate(invalid="ignore", divide="ignore"):
            self.means = {
                m: sums.sum(axis=0) / total for m, sums in self.batch_sums.items()
            }

    @property
    def n_effective(self) -> int:
        return int(self.batch_counts.sum())

    @property
    def n_batches(self) -> int:
        return len(self.batch_counts)

    def has(self, *monomials: Monomial) -> bool:
        return all(m in self.batch_sums for m in monomials)

    def jackknife(self, estimator: Callable) -> np.ndarray:
        return _jackknife_from_sums(self.batch_sums, self.batch_counts, estimator)

    # Named views of the core moments
    m11   = property(lambda self: self.means[M11])
    m22   = property(lambda self: self.means[M22])
    m33   = property(lambda self: self.means[M33])
    m13   = property(lambda self: self.means[M13])
    m31   = property(lambda self: self.means[M31])
    m1133 = property(lambda self: self.means[M1133])


def batch_sums(samples: np.ndarray, keep: np.ndarray, monomials: Sequence[Monomial]) -> dict:
    """
    Sum each monomial over the kept trajectories of one batch.
    samples has shape (n_times, 6, n_traj); returns {monomial: (n_times,)}.
    """
    kept = samples[:, :, keep]
    z    = np.moveaxis(kept, 1, 0)          # (6, n_times, n_kept)
    return {m: monomial_values(z, m).sum(axis=-1) for m in monomials}


def record_from_batches(times, per_batch: Sequence[tuple[dict, int]], n_diverged: int = 0) -> MomentRecord:
    """Stack per-batch (sums, count) pairs, in batch order, into a MomentRecord."""
    monomials = list(per_batch[0][0].keys())
    stacked   = {m: np.stack([sums[m] for sums, _ in per_batch]) for m in monomials}
    counts    = np.array([count for _, count in per_batch], dtype=np.int64)
    return MomentRecord(
        times        = np.asarray(times, dtype=float),
        batch_sums   = stacked,
        batch_counts = counts,
        n_diverged   = n_diverged,
    )


# ── JACKKNIFE ─────────────────────────────────────────────────────────────────

def _jackknife_from_sums(sums: dict, counts: np.ndarray, estimator: Callable) -> np.ndarray:
    counts = np.asarray(counts, dtype=float)
    g      = len(counts)
    if g < 2:
        raise ValueError(f"jackknife needs at least 2 batches, got {g}")

    total_count = counts.sum()
    shape       = (g,) + (1,) * (next(iter(sums.values())).ndim - 1)
    remaining   = (total_count - counts).reshape(shape)

    with np.errstate(invalid="ignore", divide="ignore"):
        leave_one_out = {
            m: (s.sum(axis=0)[None, ...] - s) / remaining for m, s in sums.items()
        }
        replicas = np.asarray(estimator(leave_one_out), dtype=float)

    centre   = replicas.mean(axis=0)
    variance = (g - 1) / g * ((replicas - centre) ** 2).sum(axis=0)
    return np.sqrt(variance)


def jackknife_error(
    batch_means: Union[Mapping, Sequence, np.ndarray],
    estimator:   Callable,
    counts:      Optional[Sequence[int]] = None,
) -> np.ndarray:
    """
    Leave-one-batch-out jackknife standard error of estimator(means).

    batch_means is either an array whose first axis runs over batches, a
    mapping of moment → (n_batches, ...) arrays, or a list of per-batch
    mappings. counts weights unequal batches (default: equal sizes). For a
    linear estimator this reproduces the standard error of the batch means.
    """
    if isinstance(batch_means, Mapping):
        stacked = {k: np.asarray(v) for k, v in batch_means.items()}
        keyed   = True
    elif isinstance(batch_means, Sequence) and batch_means and isinstance(batch_means[0], Mapping):
        stacked = {k: np.stack([np.asarray(b[k]) for b in batch_means]) for k in batch_means[0]}
        keyed   = True
    else:
        stacked = {None: np.asarray(batch_means)}
        keyed   = False

    g = len(next(iter(stacked.values())))
    if g < 2:
        raise ValueError(f"jackknife needs at least 2 batches, got {g}")
    counts = np.ones(g) if counts is None else np.asarray(counts, dtype=float)
    shape  = (g,) + (1,) * (next(iter(stacked.values())).ndim - 1)
    sums   = {k: v * counts.reshape(shape) for k, v in stacked.items()}

    if keyed:
        return _jackknife_from_sums(sums, counts, estimator)
    return _jackknife_from_sums(sums, counts, lambda loo: estimator(loo[None]))


# ── ESTIMATORS ────────────────────────────────────────────────────────────────

@dataclass
class Estimate:
    value: np.ndarray
    error: np.ndarray


def _n(j: int) -> Callable:
    m = number_monomial(j)
    return lambda means: np.real(means[m])


def _hz(means) -> np.ndarray:
    return np.real(means[M1133]) - np.abs(means[M13]) ** 2


def _xi13(means) -> np.ndarray:
    return np.real(means[M13] * means[M31]) - (np.real(means[M1133]) + np.real(means[M11]) / 2)


def _xi31(means) -> np.ndarray:
    return np.real(means[M13] * means[M31]) - (np.real(means[M1133]) + np.real(means[M33]) / 2)


def _estimate(record: MomentRecord, estimator: Callable) -> Estimate:
    if record.n_effective <= 1:
        raise ValueError(f"need more than one surviving trajectory, got {record.n_effective}")
    return Estimate(value=estimator(record.means), error=record.jackknife(estimator))


def populations(record: MomentRecord) -> tuple[Estimate, Estimate, Estimate]:
    """N_j = Re⟨a_j† a_j⟩ for the three wells."""
    return tuple(_estimate(record, _n(j)) for j in (1, 2, 3))


def hz_entanglement(record: MomentRecord) -> Estimate:
    """E_HZ = Re(m1133) − |m13|²; negative certifies 1-3 entanglement."""
    return _estimate(record, _hz)


def xi_pair(record: MomentRecord) -> tuple[Estimate, Estimate]:
    """
    (ξ13, ξ31). The leading term is the product of two separately averaged
    cross-moments, m13·m31, not the average of a product.
    """
    return _estimate(record, _xi13), _estimate(record, _xi31)


def _means_of(source) -> Mapping:
    return source.means if isinstance(source, MomentRecord) else source


def cavalcanti_witness(means, ordering: Sequence[int]) -> np.ndarray:
    """
    |⟨a_f† Π_j a_j⟩|² − ⟨N_f Π_j (N_j + 1/2)⟩ for ordering (f, j, ...).
    Positive values demonstrate steering of the first-listed mode.
    """
    product, conjugate, terms = steering_monomials(ordering)
    needed    = [product, conjugate] + [m for _, m in terms]
    available = means.has(*needed) if isinstance(means, MomentRecord) else all(m in means for m in needed)
    means     = _means_of(means)
    if not available:
        missing = [m for m in needed if m not in means]
        raise UnsupportedMomentError(
            f"ordering {tuple(ordering)} needs moments {missing} that were not accumulated "
            f"(enable tripartite moments for orderings other than (1, 3) and (3, 1))"
        )

    correlation = np.real(means[product] * means[conjugate])
    occupation  = 0.0
    for coefficient, m in terms:
        occupation = occupation + coefficient * np.real(means[m])
    return correlation - occupation


def cavalcanti_estimate(record: MomentRecord, ordering: Sequence[int]) -> Estimate:
    return _estimate(record, lambda means: cavalcanti_witness(means, ordering))


# ── FROZEN HALF-TRANSFER STATE ────────────────────────────────────────────────

def frozen_state_xi(kind: StateKind, n_total: int) -> float:
    """
    ξ for the product state with N_T/2 atoms in each end well and the
    initial statistics unchanged: −N_T/4 (coherent), −N_T(N_T+1)/4 (Fock).
    """
    kind = StateKind(kind)
    if kind == StateKind.COHERENT:
        return -n_total / 4.0
    if n_total % 2:
        raise ValueError(f"the Fock half-transfer state needs an even n_total, got {n_total}")
    return -n_total * (n_total + 1) / 4.0


def frozen_state_moments(
    kind:      StateKind,
    n_total:   int,
    n_samples: int,
    seed:      int = 1,
    n_batches: int = 100,
) -> MomentRecord:
    """Sample the frozen product state and accumulate its moments at one time."""
    kind = StateKind(kind)
    if n_samples % n_batches:
        raise ValueError(f"n_batches ({n_batches}) must divide n_samples ({n_samples})")

    z = np.zeros((len(FIELDS), n_samples), dtype=complex)
    if kind == StateKind.COHERENT:
        a, ap = sample_coherent(np.sqrt(n_total / 2.0))
        z[0], z[1], z[4], z[5] = a, ap, a, ap
    else:
        if n_total % 2:
            raise ValueError(f"the Fock half-transfer state needs an even n_total, got {n_total}")
        z[0], z[1] = sample_fock(n_total // 2, RngStream(seed, 0), size=n_samples)
        z[4], z[5] = sample_fock(n_total // 2, RngStream(seed, 1), size=n_samples)

    size      = n_samples // n_batches
    keep      = np.ones(size, dtype=bool)
    monomials = required_monomials()
    per_batch = [
        (batch_sums(z[None, :, b * size:(b + 1) * size], keep, monomials), size)
        for b in range(n_batches)
    ]
    return record_from_batches([0.0], per_batch)


# ── SERIES ────────────────────────────────────────────────────────────────────

@dataclass
class WitnessSeries:
    """Per-sample-time populations and witnesses, each with a standard error."""
    times:    np.ndarray
    n1:       np.ndarray
    n1_err:   np.ndarray
    n2:       np.ndarray
    n2_err:   np.ndarray
    n3:       np.ndarray
    n3_err:   np.ndarray
    xi13:     np.ndarray
    xi13_err: np.ndarray
    xi31:     np.ndarray
    xi31_err: np.ndarray
    hz:       np.ndarray
    hz_err:   np.ndarray
    diverged_fraction: float = 0.0
    moments:  dict = field(default_factory=dict)   # raw means: a1dag_a3, n1n3, n_total

    OBSERVABLES = ("n1", "n2", "n3", "xi13", "xi31", "hz")


def witness_series(record: MomentRecord, diverged_fraction: float = 0.0) -> WitnessSeries:
    n1, n2, n3 = populations(record)
    hz         = hz_entanglement(record)
    xi13, xi31 = xi_pair(record)
    return WitnessSeries(
        times    = record.times,
        n1       = n1.value,   n1_err   = n1.error,
        n2       = n2.value,   n2_err   = n2.error,
        n3       = n3.value,   n3_err   = n3.error,
        xi13     = xi13.value, xi13_err = xi13.error,
        xi31     = xi31.value, xi31_err = xi31.error,
        hz       = hz.value,   hz_err   = hz.error,
        diverged_fraction = diverged_fraction,
        moments  = {
            "a1dag_a3": record.m13,
            "n1n3":     np.real(record.m1133),
            "n_total":  np.real(record.m11 + record.m22 + record.m33),
        },
    )


def total_number(record: MomentRecord) -> Estimate:
    return _estimate(record, lambda m: np.real(m[M11] + m[M22] + m[M33]))


def hermiticity_report(record: MomentRecord) -> dict:
    """
    Largest ratio, over sample times, of each should-vanish quantity to its
    jackknife error: Im of the number moments and m13 − conj(m31).
    """
    def ratio(estimator) -> float:
        value = np.abs(estimator(record.means))
        error = record.jackknife(estimator)
        with np.errstate(invalid="ignore", divide="ignore"):
            z = np.where(value == 0, 0.0, value / error)
        return float(np.nanmax(z)) if z.size else 0.0

    report = {
        f"im_{name}": ratio(lambda m, mono=mono: np.imag(m[mono]))
        for name, mono in (("m11", M11), ("m22", M22), ("m33", M33), ("m1133", M1133))
    }
    report["re_m13_minus_conj_m31"] = ratio(lambda m: np.real(m[M13] - np.conj(m[M31])))
    report["im_m13_minus_conj_m31"] = ratio(lambda m: np.imag(m[M13] - np.conj(m[M31])))
    return report


def exact_series(times, means: Mapping) -> WitnessSeries:
    """Series from exact expectation values (no sampling error)."""
    zero = np.zeros(len(times))
    return WitnessSeries(
        times    = np.asarray(times, dtype=float),
        n1       = _n(1)(means), n1_err   = zero.copy(),
        n2       = _n(2)(means), n2_err   = zero.copy(),
        n3       = _n(3)(means), n3_err   = zero.copy(),
        xi13     = _xi13(means), xi13_err = zero.copy(),
        xi31     = _xi31(means), xi31_err = zero.copy(),
        hz       = _hz(means),   hz_err   = zero.copy(),
        moments  = {
            "a1dag_a3": np.asarray(means[M13]),
            "n1n3":     np.real(means[M1133]),
            "n_total":  np.real(means[M11] + means[M22] + means[M33]),
        },
    )
