"""Closed and open n-level quantum systems and their entropy production.

Closed dynamics is the unitary von Neumann flow i hbar d rho/dt = [H, rho];
open dynamics adds the Lindblad dissipator

    L[rho] = sum_k ( L_k rho L_k^dag - (L_k^dag L_k rho + rho L_k^dag L_k)/2 ).

The relative entropy D(rho||sigma) = tr(rho (log rho - log sigma)) with the
0 log 0 = 0 convention plays the role of the classical divergence, and its
rates mirror the classical formulas:

* perturbing the Hamiltonian of the reference evolution by Delta H gives
  d/dt D(rho||rho~) = (i/hbar) <[Delta H, log rho~]>_rho  (closed systems);
* against a fixed full-rank target rho_bar commuting with H,
  d/dt D(rho||rho_bar) = -(i/hbar) <[Delta H, log rho_bar]>_rho
                         + tr(L[rho](log rho - log rho_bar)),
  and the dissipative term alone is nonpositive whenever rho_bar is
  stationary for the semigroup (Lindblad monotonicity).

All matrix functions go through Hermitian eigendecompositions, so the
functional calculus is exact for the operators this module accepts.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

HERMITICITY_TOL = 1e-12
EIG_FLOOR = 1e-12
TRACE_TOL = 1e-12

sigma_x = np.array([[0.0, 1.0], [1.0, 0.0]], dtype=complex)
sigma_y = np.array([[0.0, -1.0j], [1.0j, 0.0]], dtype=complex)
sigma_z = np.array([[1.0, 0.0], [0.0, -1.0]], dtype=complex)


def _as_matrix(M) -> np.ndarray:
    M = np.asarray(M, dtype=complex)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise ValueError("operator must be a square matrix")
    return M


def _require_hermitian(M: np.ndarray, what: str) -> np.ndarray:
    if np.max(np.abs(M - M.conj().T)) > HERMITICITY_TOL:
        raise ValueError(f"{what} must be Hermitian")
    return 0.5 * (M + M.conj().T)


class DensityOperator:
    """Hermitian positive-semidefinite unit-trace matrix.

    Eigenvalues in [-1e-12, 0) are clamped to zero; anything more negative
    or a trace off 1 by more than 1e-12 is rejected.
    """

    def __init__(self, matrix):
        M = _require_hermitian(_as_matrix(matrix), "density operator")
        tr = np.trace(M).real
        if abs(tr - 1.0) > TRACE_TOL:
            raise ValueError(f"trace must be 1 (got {tr!r})")
        lam, U = np.linalg.eigh(M)
        if lam.min() < -EIG_FLOOR:
            raise ValueError(f"negative eigenvalue {lam.min():.3e}")
        lam = np.maximum(lam, 0.0)
        M = (U * lam) @ U.conj().T
        self.matrix = M / np.trace(M).real
        self.matrix.flags.writeable = False

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    @classmethod
    def pure(cls, psi) -> "DensityOperator":
        psi = np.asarray(psi, dtype=complex).reshape(-1)
        psi = psi / np.linalg.norm(psi)
        return cls(np.outer(psi, psi.conj()))

    @classmethod
    def maximally_mixed(cls, n: int) -> "DensityOperator":
        return cls(np.eye(n) / n)

    def eigensystem(self) -> tuple[np.ndarray, np.ndarray]:
        return np.linalg.eigh(self.matrix)

    def spectrum(self) -> np.ndarray:
        return np.linalg.eigvalsh(self.matrix)

    def purity(self) -> float:
        return float(np.trace(self.matrix @ self.matrix).real)

    def is_full_rank(self, floor: float = EIG_FLOOR) -> bool:
        return bool(self.spectrum().min() > floor)


@dataclass(frozen=True)
class HamiltonianOperator:
    """Hermitian energy observable with its Planck-constant scale."""

    matrix: np.ndarray
    hbar: float = 1.0

    def __post_init__(self):
        M = _require_hermitian(_as_matrix(self.matrix), "hamiltonian")
        object.__setattr__(self, "matrix", M)
        if self.hbar <= 0.0:
            raise ValueError("hbar must be positive")

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]


@dataclass(frozen=True)
class LindbladSpec:
    """Effective Hamiltonian plus jump operators of a Markovian semigroup."""

    hamiltonian: HamiltonianOperator
    jump_ops: tuple = ()

    def __post_init__(self):
        ops = tuple(_as_matrix(L) for L in self.jump_ops)
        for L in ops:
            if L.shape != self.hamiltonian.matrix.shape:
                raise ValueError("jump operator dimension mismatch")
            if not np.all(np.isfinite(L)):
                raise ValueError("jump operators must be finite")
        object.__setattr__(self, "jump_ops", ops)

    def dissipator(self, rho: np.ndarray) -> np.ndarray:
        out = np.zeros_like(rho)
        for L in self.jump_ops:
            Ld = L.conj().T
            LdL = Ld @ L
            out += L @ rho @ Ld - 0.5 * (LdL @ rho + rho @ LdL)
        return out

    def generator(self, rho: np.ndarray) -> np.ndarray:
        H = self.hamiltonian.matrix
        comm = H @ rho - rho @ H
        return -1j / self.hamiltonian.hbar * comm + self.dissipator(rho)


def depolarizing_jump_operators(rate: float) -> tuple:
    """sqrt(rate/4) sigma_k for k in {x, y, z}: isotropic qubit noise."""
    c = np.sqrt(rate / 4.0)
    return (c * sigma_x, c * sigma_y, c * sigma_z)


# ---------------------------------------------------------------------------
# matrix functions (Hermitian functional calculus)
# ---------------------------------------------------------------------------

def _log_psd(rho: DensityOperator, what: str = "state") -> np.ndarray:
    lam, U = rho.eigensystem()
    if lam.min() <= EIG_FLOOR:
        raise ValueError(f"log of singular {what}")
    return (U * np.log(lam)) @ U.conj().T


def von_neumann_entropy(rho: DensityOperator) -> float:
    """-tr(rho log rho) in nats, with 0 log 0 = 0."""
    lam = rho.spectrum()
    lam = lam[lam > EIG_FLOOR]
    return float(-np.sum(lam * np.log(lam)))


def relative_entropy(rho: DensityOperator, sigma: DensityOperator) -> float:
    """tr(rho(log rho - log sigma)); +inf when supp(rho) leaves supp(sigma)."""
    if rho.dim != sigma.dim:
        raise ValueError("dimension mismatch")
    lam, U = rho.eigensystem()
    mu, V = sigma.eigensystem()
    lam = np.maximum(lam, 0.0)
    overlap = np.abs(U.conj().T @ V) ** 2  # overlap[i, j] = |<u_i|v_j>|^2
    sing = mu <= EIG_FLOOR
    if np.any(sing):
        escaped = float(lam @ overlap[:, sing].sum(axis=1))
        if escaped > 1e-10:
            return np.inf
    keep = lam > EIG_FLOOR
    s_rho = float(np.sum(lam[keep] * np.log(lam[keep])))
    cross = float((lam[:, None] * overlap[:, ~sing] * np.log(mu[~sing])[None, :]).sum())
    return s_rho - cross


def gibbs_state(H: HamiltonianOperator, beta: float) -> DensityOperator:
    """Z^{-1} exp(-beta H); commutes with H by construction."""
    if beta < 0.0:
        raise ValueError("beta must be nonnegative")
    lam, U = np.linalg.eigh(H.matrix)
    w = np.exp(-beta * (lam - lam.min()))
    w /= w.sum()
    return DensityOperator((U * w) @ U.conj().T)


# ---------------------------------------------------------------------------
# closed dynamics
# ---------------------------------------------------------------------------

def evolve_closed(H: HamiltonianOperator, rho0: DensityOperator,
                  t: float) -> DensityOperator:
    """rho_t = U rho0 U^dag with U = exp(-i H t / hbar)."""
    if H.dim != rho0.dim:
        raise ValueError("dimension mismatch")
    lam, V = np.linalg.eigh(H.matrix)
    phases = np.exp(-1j * lam * t / H.hbar)
    U = (V * phases) @ V.conj().T
    return DensityOperator(U @ rho0.matrix @ U.conj().T)


def _real_rate(value: complex, what: str) -> float:
    if abs(value.imag) > 1e-10:
        raise RuntimeError(f"{what} has imaginary residue {value.imag:.3e}")
    return float(value.real)


def relative_entropy_rate(rho: DensityOperator, delta_h: HamiltonianOperator,
                          rho_tilde: DensityOperator) -> float:
    """d/dt D(rho||rho~) = (i/hbar) <[Delta H, log rho~]>_rho.

    ``rho`` follows the unperturbed Hamiltonian, ``rho~`` the perturbed one
    H + Delta H; both evaluated at the same instant.  ``rho~`` must be
    full-rank.  Exchanging the roles flips the sign and replaces the log
    argument (pass -Delta H and swap the states).
    """
    L = _log_psd(rho_tilde, "state")
    comm = delta_h.matrix @ L - L @ delta_h.matrix
    val = 1j / delta_h.hbar * np.trace(rho.matrix @ comm)
    return _real_rate(val, "relative entropy rate")


# ---------------------------------------------------------------------------
# open dynamics
# ---------------------------------------------------------------------------

class PositivityLossError(RuntimeError):
    """Integration produced an eigenvalue below the clamping floor."""


@dataclass
class OperatorTrajectory:
    """Density operators on a uniform time grid with projection diagnostics.

    ``projection_residue`` is the largest eigenvalue clamp applied by the
    per-step positivity projection (monitored; zero for well-resolved runs).
    """

    times: np.ndarray
    states: list
    projection_residue: float

    def __len__(self) -> int:
        return len(self.states)

    def divergence_curve(self, reference: DensityOperator) -> np.ndarray:
        return np.array([relative_entropy(s, reference) for s in self.states])


def lindblad_evolve(spec: LindbladSpec, rho0: DensityOperator, t1: float,
                    dt: float, store_every: int = 1) -> OperatorTrajectory:
    """Fixed-step RK4 on the vectorized generator with positivity projection.

    The generator is trace-free, so every Runge-Kutta stage preserves the
    trace to roundoff.  After each step the state is re-Hermitized and
    eigenvalues in [-1e-10, 0) are clamped to zero (the residue is
    reported); anything below -1e-10 aborts with a dt suggestion.
    """
    if dt <= 0.0 or t1 <= 0.0:
        raise ValueError("dt and t1 must be positive")
    n = rho0.dim
    if spec.hamiltonian.dim != n:
        raise ValueError("dimension mismatch")
    steps = int(round(t1 / dt))
    floor = 1e-10

    def rhs(R):
        return spec.generator(R)

    rho = rho0.matrix.copy()
    times = [0.0]
    states = [rho0]
    residue = 0.0
    for k in range(steps):
        k1 = rhs(rho)
        k2 = rhs(rho + 0.5 * dt * k1)
        k3 = rhs(rho + 0.5 * dt * k2)
        k4 = rhs(rho + dt * k3)
        rho = rho + dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        rho = 0.5 * (rho + rho.conj().T)
        lam, U = np.linalg.eigh(rho)
        if lam.min() < -floor:
            raise PositivityLossError(
                f"positivity lost at t={(k + 1) * dt:.6g} "
                f"(eigenvalue {lam.min():.3e}); try dt <= {dt / 4.0:.3e}")
        if lam.min() < 0.0:
            residue = max(residue, float(-lam.min()))
            lam = np.maximum(lam, 0.0)
            rho = (U * lam) @ U.conj().T
        rho = rho / np.trace(rho).real
        if (k + 1) % store_every == 0 or k == steps - 1:
            times.append((k + 1) * dt)
            states.append(DensityOperator(rho))
    return OperatorTrajectory(np.asarray(times), states, residue)


def dissipative_production_rate(rho: DensityOperator, spec: LindbladSpec,
                                rho_bar: DensityOperator) -> float:
    """tr(L[rho] (log rho - log rho_bar)) for a commuting full-rank target.

    Nonpositive whenever rho_bar is stationary for the semigroup; requires
    [rho_bar, H] = 0 (within 1e-10) and full-rank states.
    """
    H = spec.hamiltonian.matrix
    comm = rho_bar.matrix @ H - H @ rho_bar.matrix
    if np.max(np.abs(comm)) > 1e-10:
        raise ValueError("target state does not commute with the effective hamiltonian")
    diff = _log_psd(rho) - _log_psd(rho_bar, "target state")
    val = np.trace(spec.dissipator(rho.matrix) @ diff)
    return _real_rate(val, "dissipative production rate")


@dataclass(frozen=True)
class OpenProductionRate:
    """d/dt D(rho||rho_bar) under perturbed open evolution, term by term."""

    total: float
    hamiltonian_term: float
    dissipative_term: float


def production_decomposition(rho: DensityOperator, delta_h: HamiltonianOperator,
                             spec: LindbladSpec, rho_bar: DensityOperator
                             ) -> OpenProductionRate:
    """Split d/dt D(rho||rho_bar) for the flow with Hamiltonian H + Delta H.

    hamiltonian_term = -(i/hbar) <[Delta H, log rho_bar]>_rho,
    dissipative_term = tr(L[rho](log rho - log rho_bar));
    ``rho_bar`` is a fixed target commuting with the effective H.
    """
    ham_term = -relative_entropy_rate(rho, delta_h, rho_bar)
    diss = dissipative_production_rate(rho, spec, rho_bar)
    return OpenProductionRate(ham_term + diss, ham_term, diss)


# ---------------------------------------------------------------------------
# operator text I/O: first line n, then n^2 entries a+bi row-major
# ---------------------------------------------------------------------------

def save_operator(M, path) -> None:
    M = _as_matrix(M)
    n = M.shape[0]
    with open(path, "w") as fh:
        fh.write(f"{n}\n")
        for v in M.reshape(-1):
            fh.write(f"{v.real:.17g}{v.imag:+.17g}i\n")


def load_operator(path) -> np.ndarray:
    with open(path) as fh:
        tokens = fh.read().split()
    n = int(tokens[0])
    if len(tokens) != 1 + n * n:
        raise ValueError(f"expected {n * n} entries, got {len(tokens) - 1}")
    vals = [complex(tok.replace("i", "j")) if ("i" in tok or "j" in tok)
            else complex(float(tok)) for tok in tokens[1:]]
    return np.array(vals, dtype=complex).reshape(n, n)
