"""Synthetic calibration data: spectra of a disordered hopping chain.

One photon hopping on an n-site chain with on-site detunings and
nearest-neighbor couplings has a symmetric tridiagonal Hamiltonian; its
eigenvalues (sorted ascending) are the observable spectrum. The generator
samples random chains, reports the true spectrum as the target vector, and
produces the prior prediction by recomputing the spectrum from deliberately
distorted parameters, imitating a control model whose calibration is
systematically off. Gaussian measurement noise can be added to the targets.

The eigensolver is implemented here (implicit-shift QL with accumulated
rotations) so the whole pipeline stays self-contained and every spectrum can
be verified against independent oracles: per-pair residuals, the trace
identity, and Cauchy interlacing.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ._util import derive_seed
from .core import Dataset

__all__ = [
    "EigensolverError",
    "ChainParams",
    "tridiag_eigensystem",
    "spectrum",
    "Distortion",
    "ControlModelProxy",
    "ChainSampler",
    "generate_dataset",
    "BiasScenario",
    "BiasData",
    "generate_bias_dataset",
    "save_bias_csv",
    "load_bias_csv",
]

_NOISE_TAG = 0x2015E
_BIAS_TAG = 0xB1A5
_SWEEPS_PER_SITE = 100
_RESIDUAL_BOUND = 1e-10
_TRACE_BOUND = 1e-9


class EigensolverError(RuntimeError):
    """Raised when the iterative diagonalization fails its accuracy contract."""


@dataclass
class ChainParams:
    """Chain of n_sites sites: detunings (length n) and couplings (length n-1)."""

    n_sites: int
    detunings: np.ndarray
    couplings: np.ndarray

    def __post_init__(self):
        if self.n_sites < 1:
            raise ValueError(f"n_sites must be >= 1, got {self.n_sites}")
        self.detunings = np.asarray(self.detunings, dtype=np.float64)
        self.couplings = np.asarray(self.couplings, dtype=np.float64)
        if self.detunings.shape != (self.n_sites,):
            raise ValueError("detunings must have length n_sites")
        if self.couplings.shape != (max(self.n_sites - 1, 0),):
            raise ValueError("couplings must have length n_sites - 1")
        if not (np.all(np.isfinite(self.detunings)) and np.all(np.isfinite(self.couplings))):
            raise ValueError("chain parameters must be finite")

    def hamiltonian(self) -> np.ndarray:
        H = np.diag(self.detunings)
        for i, g in enumerate(self.couplings):
            H[i, i + 1] = H[i + 1, i] = g
        return H


def tridiag_eigensystem(diag, offdiag, sweep_cap: int | None = None):
    """Eigenvalues and eigenvectors of a symmetric tridiagonal matrix.

    Implicit-shift QL iteration with plane rotations accumulated into the
    eigenvector matrix. Returns (values ascending, vectors as columns in the
    same order). Raises EigensolverError if the sweep cap (100 per site by
    default) is exhausted before every off-diagonal entry deflates.
    """
    d = np.asarray(diag, dtype=np.float64).copy()
    n = d.shape[0]
    e = np.zeros(n, dtype=np.float64)
    if n > 1:
        e[: n - 1] = np.asarray(offdiag, dtype=np.float64)
    z = np.eye(n)
    cap = sweep_cap if sweep_cap is not None else _SWEEPS_PER_SITE * n
    eps = np.finfo(np.float64).eps
    sweeps = 0
    for l in range(n):
        while True:
            for m in range(l, n - 1):
                dd = abs(d[m]) + abs(d[m + 1])
                if abs(e[m]) <= eps * dd:
                    break
            else:
                m = n - 1
            if m == l:
                break
            sweeps += 1
            if sweeps > cap:
                raise EigensolverError(
                    f"no convergence after {cap} sweeps; "
                    f"largest remaining off-diagonal {np.max(np.abs(e)):.3e}"
                )
            g = (d[l + 1] - d[l]) / (2.0 * e[l])
            r = math.hypot(g, 1.0)
            g = d[m] - d[l] + e[l] / (g + math.copysign(r, g))
            s = c = 1.0
            p = 0.0
            underflow = False
            for i in range(m - 1, l - 1, -1):
                f = s * e[i]
                b = c * e[i]
                r = math.hypot(f, g)
                e[i + 1] = r
                if r == 0.0:
                    d[i + 1] -= p
                    e[m] = 0.0
                    underflow = True
                    break
                s = f / r
                c = g / r
                g = d[i + 1] - p
                r = (d[i] - g) * s + 2.0 * c * b
                p = s * r
                d[i + 1] = g + p
                g = c * r - b
                col = z[:, i + 1].copy()
                z[:, i + 1] = s * z[:, i] + c * col
                z[:, i] = c * z[:, i] - s * col
            if underflow:
                continue
            d[l] -= p
            e[l] = g
            e[m] = 0.0
    order = np.argsort(d, kind="stable")
    return d[order], z[:, order]


def spectrum(params: ChainParams) -> np.ndarray:
    """Ascending eigenvalues of the chain Hamiltonian, accuracy-verified.

    Each eigenpair must satisfy |H v - lambda v| <= 1e-10 * |H| (infinity
    norm) and the eigenvalue sum must match the detuning sum (trace identity)
    to 1e-9 * |H|; violations raise EigensolverError with diagnostics.
    """
    if params.n_sites == 1:
        return params.detunings.copy()
    values, vectors = tridiag_eigensystem(params.detunings, params.couplings)
    H = params.hamiltonian()
    norm = float(np.max(np.sum(np.abs(H), axis=1)))
    scale = max(norm, 1.0)
    residuals = np.linalg.norm(H @ vectors - vectors * values[None, :], axis=0)
    if np.any(residuals > _RESIDUAL_BOUND * scale):
        raise EigensolverError(
            f"eigenpair residuals {residuals.max():.3e} exceed "
            f"{_RESIDUAL_BOUND * scale:.3e}"
        )
    trace_gap = abs(float(values.sum()) - float(params.detunings.sum()))
    if trace_gap > _TRACE_BOUND * scale:
        raise EigensolverError(f"trace identity violated by {trace_gap:.3e}")
    return values


# ---------------------------------------------------------------------------
# Control-model proxy and dataset generation
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Distortion:
    """Smooth parameter distortion: offset + gain * v + curvature * v^2 / scale."""

    offset: float = 0.0
    gain: float = 1.0
    curvature: float = 0.0
    scale: float = 50.0

    def apply(self, values: np.ndarray) -> np.ndarray:
        return self.offset + self.gain * values + self.curvature * values * values / self.scale

    @property
    def is_identity(self) -> bool:
        return self.offset == 0.0 and self.gain == 1.0 and self.curvature == 0.0


@dataclass(frozen=True)
class ControlModelProxy:
    """Stand-in for a miscalibrated control model.

    The proxy's spectrum is computed from distorted chain parameters; with
    identity distortions it reproduces the true spectrum exactly. Measurement
    noise (applied to the targets, then re-sorted) is seeded from the proxy's
    own seed so parameter sampling and noise stay independent streams.
    """

    delta: Distortion = Distortion()
    coupling: Distortion = Distortion()
    noise_sigma: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if self.noise_sigma < 0:
            raise ValueError(f"noise_sigma must be >= 0, got {self.noise_sigma}")

    def distort(self, params: ChainParams) -> ChainParams:
        return ChainParams(
            params.n_sites,
            self.delta.apply(params.detunings),
            self.coupling.apply(params.couplings),
        )

    @classmethod
    def identity(cls) -> "ControlModelProxy":
        return cls()

    @classmethod
    def default_scenario(cls, seed: int = 0) -> "ControlModelProxy":
        """Mildly miscalibrated electronics: small offset, 2% gain error,
        gentle curvature, and 0.1 MHz measurement noise."""
        return cls(
            delta=Distortion(offset=0.5, gain=1.02, curvature=0.05),
            coupling=Distortion(offset=0.2, gain=1.01, curvature=0.02),
            noise_sigma=0.1,
            seed=seed,
        )

    @classmethod
    def offset_scenario(cls, offset: float = 2.0, seed: int = 0) -> "ControlModelProxy":
        """Pure detuning offset: shifts every predicted eigenvalue by ``offset``."""
        return cls(delta=Distortion(offset=offset), seed=seed)


@dataclass(frozen=True)
class ChainSampler:
    """Uniform sampling ranges for the chain parameters (MHz scale)."""

    n_sites: int = 5
    delta_range: tuple[float, float] = (-50.0, 50.0)
    coupling_range: tuple[float, float] = (20.0, 40.0)

    def __post_init__(self):
        if self.n_sites < 1:
            raise ValueError(f"n_sites must be >= 1, got {self.n_sites}")
        for name, (lo, hi) in (
            ("delta_range", self.delta_range),
            ("coupling_range", self.coupling_range),
        ):
            if not (math.isfinite(lo) and math.isfinite(hi) and lo < hi):
                raise ValueError(f"{name} must be a finite (lo, hi) with lo < hi")

    def sample(self, rng: np.random.Generator) -> ChainParams:
        delta = rng.uniform(*self.delta_range, size=self.n_sites)
        g = rng.uniform(*self.coupling_range, size=max(self.n_sites - 1, 0))
        return ChainParams(self.n_sites, delta, g)


def _example_from_params(
    true_params: ChainParams, proxy: ControlModelProxy, noise_rng: np.random.Generator
) -> tuple[np.ndarray, np.ndarray]:
    """(prior features, observed targets) for one chain instance, both ascending."""
    target = spectrum(true_params)
    if proxy.noise_sigma > 0.0:
        target = np.sort(target + noise_rng.normal(0.0, proxy.noise_sigma, target.shape))
    features = spectrum(proxy.distort(true_params))
    return features, target


def generate_dataset(
    m: int,
    sampler: ChainSampler = ChainSampler(),
    proxy: ControlModelProxy = ControlModelProxy(),
    seed: int = 0,
    units: str = "MHz",
) -> Dataset:
    """Sample m chains and emit the (prior prediction, spectrum) dataset.

    Row i is generated from seeds derived from (seed, i) and (proxy.seed, i),
    so rows are independent, the output is deterministic per seed, and a
    prefix of a longer run equals a shorter run.
    """
    if m < 1:
        raise ValueError(f"m must be >= 1, got {m}")
    n = sampler.n_sites
    X = np.empty((m, n))
    Y = np.empty((m, n))
    for i in range(m):
        row_rng = np.random.default_rng(derive_seed(seed, i))
        noise_rng = np.random.default_rng(derive_seed(proxy.seed, _NOISE_TAG, i))
        X[i], Y[i] = _example_from_params(sampler.sample(row_rng), proxy, noise_rng)
    return Dataset(X, Y, units=units)


# ---------------------------------------------------------------------------
# Bias-feature mode for explainability studies
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class BiasScenario:
    """Maps qubit and coupler bias features to chain parameters.

    Biases are sampled uniformly in bias_range; detunings and couplings
    follow smooth saturating maps base + span * sensitivity * tanh(bias).
    Zero biases give the baseline chain. Per-site sensitivities shape which
    features matter; ``boundary_biased`` weights the edges heavily.
    """

    n_qubit_biases: int = 5
    n_coupler_biases: int = 4
    bias_range: tuple[float, float] = (-1.0, 1.0)
    delta_base: float = 0.0
    delta_span: float = 50.0
    coupling_base: float = 30.0
    coupling_span: float = 10.0
    qubit_sensitivity: tuple[float, ...] | None = None
    coupler_sensitivity: tuple[float, ...] | None = None

    def __post_init__(self):
        if self.n_qubit_biases < 1:
            raise ValueError("n_qubit_biases must be >= 1")
        if self.n_coupler_biases != self.n_qubit_biases - 1:
            raise ValueError(
                "n_coupler_biases must equal n_qubit_biases - 1 "
                f"(one coupler between adjacent sites), got {self.n_coupler_biases}"
            )
        if self.qubit_sensitivity is not None and len(self.qubit_sensitivity) != self.n_qubit_biases:
            raise ValueError("qubit_sensitivity length must equal n_qubit_biases")
        if (
            self.coupler_sensitivity is not None
            and len(self.coupler_sensitivity) != self.n_coupler_biases
        ):
            raise ValueError("coupler_sensitivity length must equal n_coupler_biases")

    @property
    def n_features(self) -> int:
        return self.n_qubit_biases + self.n_coupler_biases

    @property
    def feature_names(self) -> list[str]:
        return [f"B{k + 1}" for k in range(self.n_features)]

    def _sensitivities(self) -> tuple[np.ndarray, np.ndarray]:
        q = (
            np.asarray(self.qubit_sensitivity, dtype=np.float64)
            if self.qubit_sensitivity is not None
            else np.ones(self.n_qubit_biases)
        )
        c = (
            np.asarray(self.coupler_sensitivity, dtype=np.float64)
            if self.coupler_sensitivity is not None
            else np.ones(self.n_coupler_biases)
        )
        return q, c

    def map_biases(self, biases: np.ndarray) -> ChainParams:
        biases = np.asarray(biases, dtype=np.float64)
        if biases.shape != (self.n_features,):
            raise ValueError(f"expected {self.n_features} biases, got {biases.shape}")
        q_sens, c_sens = self._sensitivities()
        qubit = biases[: self.n_qubit_biases]
        coupler = biases[self.n_qubit_biases :]
        delta = self.delta_base + self.delta_span * q_sens * np.tanh(qubit)
        g = self.coupling_base + self.coupling_span * c_sens * np.tanh(coupler)
        return ChainParams(self.n_qubit_biases, delta, g)

    @classmethod
    def boundary_biased(cls) -> "BiasScenario":
        """Edge sites and edge couplers respond far more strongly than the bulk."""
        return cls(
            qubit_sensitivity=(1.8, 0.6, 0.4, 0.6, 1.8),
            coupler_sensitivity=(3.0, 0.5, 0.5, 3.0),
        )


@dataclass
class BiasData:
    biases: np.ndarray
    dataset: Dataset
    bias_names: list[str]


def generate_bias_dataset(
    m: int,
    scenario: BiasScenario = BiasScenario(),
    proxy: ControlModelProxy = ControlModelProxy(),
    seed: int = 0,
    units: str = "MHz",
) -> BiasData:
    """Like generate_dataset, but chains derive from sampled bias features.

    Returns the raw bias matrix alongside the dataset so attribution studies
    can explain predictions in terms of the biases that produced them.
    """
    if m < 1:
        raise ValueError(f"m must be >= 1, got {m}")
    n = scenario.n_qubit_biases
    biases = np.empty((m, scenario.n_features))
    X = np.empty((m, n))
    Y = np.empty((m, n))
    lo, hi = scenario.bias_range
    for i in range(m):
        row_rng = np.random.default_rng(derive_seed(seed, _BIAS_TAG, i))
        noise_rng = np.random.default_rng(derive_seed(proxy.seed, _NOISE_TAG, i))
        biases[i] = row_rng.uniform(lo, hi, scenario.n_features)
        X[i], Y[i] = _example_from_params(scenario.map_biases(biases[i]), proxy, noise_rng)
    dataset = Dataset(X, Y, units=units)
    return BiasData(biases=biases, dataset=dataset, bias_names=scenario.feature_names)


def save_bias_csv(bias_data: BiasData, path) -> None:
    """Sibling CSV of bias features keyed by example id."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["example_id"] + list(bias_data.bias_names))
        for i, row in enumerate(bias_data.biases):
            writer.writerow([i] + [repr(float(v)) for v in row])


def load_bias_csv(path) -> tuple[np.ndarray, list[str]]:
    path = Path(path)
    with open(path, "r", newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if not header or header[0] != "example_id":
            raise ValueError(f"{path}: expected header starting with example_id")
        names = header[1:]
        rows = []
        for lineno, cells in enumerate(reader, start=2):
            if not cells:
                continue
            if len(cells) != len(header):
                raise ValueError(f"{path}: row {lineno}: expected {len(header)} cells")
            try:
                rows.append([float(c) for c in cells[1:]])
            except ValueError:
                raise ValueError(f"{path}: row {lineno}: non-numeric cell") from None
    if not rows:
        raise ValueError(f"{path}: no data rows")
    return np.array(rows, dtype=np.float64), names
