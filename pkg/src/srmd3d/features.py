"""Random Gaussian-chirplet features and the real dictionary built from them.

An atom ``(tau, xi, beta, phi)`` evaluates to

    exp(-(t - tau)^2 / (2 alpha)) * cos(2 pi xi t + pi beta (t - tau)^2 - phi pi / 2)

so ``phi = 0`` is the cosine phase and ``phi = 1`` the sine phase.
"""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field

import numpy as np

from .ridges import RidgeCurve

log = logging.getLogger(__name__)

# default ceiling on the dense dictionary, bytes
DEFAULT_MEMORY_CAP = 2 * 1024**3


class DictionaryTooLarge(MemoryError):
    def __init__(self, n_bytes: int, cap: int):
        super().__init__(f"dictionary needs {n_bytes / 1e6:.1f} MB, cap is {cap / 1e6:.1f} MB")
        self.n_bytes = n_bytes
        self.cap = cap


@dataclass(frozen=True)
class FeatureAtom:
    tau: float
    xi: float
    beta: float = 0.0
    phi: int = 0
    mode_index: int = 0

    def __post_init__(self):
        if self.phi not in (0, 1):
            raise ValueError(f"phi must be 0 or 1, got {self.phi}")


@dataclass
class AtomBatch:
    """Column-major storage for many atoms of one group (cheaper than a list of objects)."""

    tau: np.ndarray
    xi: np.ndarray
    beta: np.ndarray
    phi: np.ndarray
    mode_index: int = 0
    n_clamped: int = 0

    def __post_init__(self):
        self.tau = np.asarray(self.tau, dtype=float)
        self.xi = np.asarray(self.xi, dtype=float)
        self.beta = np.asarray(self.beta, dtype=float)
        self.phi = np.asarray(self.phi, dtype=np.int8)
        n = self.tau.size
        if not (self.xi.size == self.beta.size == self.phi.size == n):
            raise ValueError("atom parameter arrays differ in length")

    def __len__(self) -> int:
        return self.tau.size

    def __getitem__(self, i) -> FeatureAtom:
        return FeatureAtom(float(self.tau[i]), float(self.xi[i]), float(self.beta[i]),
                           int(self.phi[i]), self.mode_index)

    def __iter__(self):
        return (self[i] for i in range(len(self)))

    @classmethod
    def from_atoms(cls, atoms, mode_index: int | None = None) -> "AtomBatch":
        atoms = list(atoms)
        if mode_index is None:
            mode_index = atoms[0].mode_index if atoms else 0
        return cls(np.array([a.tau for a in atoms]), np.array([a.xi for a in atoms]),
                   np.array([a.beta for a in atoms]), np.array([a.phi for a in atoms]),
                   mode_index)


def sample_uniform_2d(n: int, L: float, f_max: float, seed=None, mode_index: int = 0) -> AtomBatch:
    """``(tau, xi)`` uniform on ``[0, L] x [0, f_max]``, ``beta = 0``, fair-coin ``phi``."""
    if n < 1:
        raise ValueError("n must be >= 1")
    rng = np.random.default_rng(seed)
    tau = rng.uniform(0.0, L, n)
    xi = rng.uniform(0.0, f_max, n)
    phi = rng.integers(0, 2, n)
    return AtomBatch(tau, xi, np.zeros(n), phi, mode_index)


def sample_concentrated_3d(ridge: RidgeCurve, n: int, lam: float, seed=None,
                           L: float | None = None, fs: float | None = None,
                           mode_index: int = 0, clamp_warn_fraction: float = 0.05) -> AtomBatch:
    """Uniform samples in a ``lam`` x ``lam`` box around the ridge's IF and CR.

    ``tau`` is uniform on ``[0, L]``; ``xi - if(tau)`` and ``beta - cr(tau)``
    are uniform on ``[-lam/2, lam/2]`` with the ridge linearly interpolated
    between frames. ``xi`` is then clamped to ``[0, fs/2]``; the number of
    clamped samples is stored on the batch and a warning is logged when it
    exceeds ``clamp_warn_fraction``.

    Parameters
    ----------
    L : float, optional
        Signal duration. Defaults to the ridge's last frame time plus one
        frame step.
    fs : float, optional
        Sample rate; no clamping when omitted.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    if not lam > 0:
        raise ValueError("lambda must be positive")
    if len(ridge) == 0:
        raise ValueError("empty ridge")
    if L is None:
        t = ridge.time_s
        L = float(t[-1] + (t[1] - t[0] if t.size > 1 else 0.0))
    rng = np.random.default_rng(seed)
    tau = rng.uniform(0.0, L, n)
    f_hat, cr_hat = ridge.at(tau)
    xi = f_hat + rng.uniform(-lam / 2, lam / 2, n)
    beta = cr_hat + rng.uniform(-lam / 2, lam / 2, n)
    phi = rng.integers(0, 2, n)
    n_clamped = 0
    if fs is not None:
        out = (xi < 0) | (xi > fs / 2)
        n_clamped = int(out.sum())
        xi = np.clip(xi, 0.0, fs / 2)
        if n_clamped > clamp_warn_fraction * n:
            log.warning("%d of %d features clamped to [0, fs/2]: ridge %d hugs the band edge",
                        n_clamped, n, mode_index)
    return AtomBatch(tau, xi, beta, phi, mode_index, n_clamped)


def _columns(tau, xi, beta, phi, t, alpha) -> np.ndarray:
    d = t[:, None] - tau[None, :]
    env = np.exp(-d**2 / (2.0 * alpha))
    arg = 2 * np.pi * xi[None, :] * t[:, None] + np.pi * beta[None, :] * d**2 - 0.5 * np.pi * phi[None, :]
    return env * np.cos(arg)


def evaluate_atom(atom: FeatureAtom, time_grid, alpha: float) -> np.ndarray:
    """One dictionary column sampled on ``time_grid``."""
    if not alpha > 0:
        raise ValueError("alpha must be positive")
    t = np.asarray(time_grid, dtype=float)
    return _columns(np.array([atom.tau]), np.array([atom.xi]), np.array([atom.beta]),
                    np.array([atom.phi]), t, alpha)[:, 0]


@dataclass
class FeatureDictionary:
    """Atom groups (one per mode) and the settings their columns were built with.

    ``offsets[k]:offsets[k+1]`` is mode ``k``'s column block.
    """

    groups: list[AtomBatch]
    window_param_alpha: float
    time_grid: np.ndarray
    offsets: np.ndarray = field(init=False)

    def __post_init__(self):
        if not self.groups:
            raise ValueError("at least one atom group required")
        sizes = [len(g) for g in self.groups]
        if sum(sizes) < 1:
            raise ValueError("dictionary has no atoms")
        self.offsets = np.concatenate([[0], np.cumsum(sizes)]).astype(int)

    @property
    def n_atoms(self) -> int:
        return int(self.offsets[-1])

    @property
    def atoms(self) -> list[FeatureAtom]:
        return [a for g in self.groups for a in g]

    def block(self, k: int) -> slice:
        return slice(int(self.offsets[k]), int(self.offsets[k + 1]))

    def matrix(self, memory_cap: int = DEFAULT_MEMORY_CAP) -> np.ndarray:
        m = self.time_grid.size
        n_bytes = 8 * m * self.n_atoms
        if n_bytes > memory_cap:
            raise DictionaryTooLarge(n_bytes, memory_cap)
        out = np.empty((m, self.n_atoms))
        for k, g in enumerate(self.groups):
            if len(g):
                out[:, self.block(k)] = _columns(g.tau, g.xi, g.beta, g.phi,
                                                 self.time_grid, self.window_param_alpha)
        return out


def build_dictionary(atom_groups, time_grid, alpha: float,
                     memory_cap: int = DEFAULT_MEMORY_CAP) -> tuple[FeatureDictionary, np.ndarray]:
    """Assemble ``Psi`` with columns ordered by group, then sample index.

    ``atom_groups`` holds :class:`AtomBatch` objects or plain lists of
    :class:`FeatureAtom`. Columns are not normalized; their norm range is
    logged at debug level.
    """
    if not alpha > 0:
        raise ValueError("alpha must be positive")
    groups = [g if isinstance(g, AtomBatch) else AtomBatch.from_atoms(g, k)
              for k, g in enumerate(atom_groups)]
    d = FeatureDictionary(groups, float(alpha), np.asarray(time_grid, dtype=float))
    psi = d.matrix(memory_cap)
    if log.isEnabledFor(logging.DEBUG):
        norms = np.linalg.norm(psi, axis=0)
        log.debug("dictionary %dx%d, column norms in [%.3g, %.3g]",
                  *psi.shape, norms.min(), norms.max())
    return d, psi


def write_atoms_csv(path, groups, labels=None) -> None:
    """``mode_index,tau_s,xi_hz,beta_hzps,phi`` (plus ``cluster`` when ``labels`` is given)."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        header = ["mode_index", "tau_s", "xi_hz", "beta_hzps", "phi"]
        if labels is not None:
            header.append("cluster")
        w.writerow(header)
        j = 0
        for g in groups:
            for i in range(len(g)):
                row = [g.mode_index, repr(float(g.tau[i])), repr(float(g.xi[i])),
                       repr(float(g.beta[i])), int(g.phi[i])]
                if labels is not None:
                    row.append(int(labels[j]))
                w.writerow(row)
                j += 1


def read_atoms_csv(path) -> list[AtomBatch]:
    rows: dict[int, list] = {}
    with open(path, newline="", encoding="utf-8") as fh:
        for r in csv.DictReader(fh):
            rows.setdefault(int(r["mode_index"]), []).append(r)
    return [AtomBatch(np.array([float(r["tau_s"]) for r in rs]),
                      np.array([float(r["xi_hz"]) for r in rs]),
                      np.array([float(r["beta_hzps"]) for r in rs]),
                      np.array([int(r["phi"]) for r in rs]), k)
            for k, rs in sorted(rows.items())]
