"""Seeded synthetic corruption of clean cubes.

Six cases are supported:

1. ``iid``       zero-mean Gaussian with a fixed standard deviation in every band;
2. ``noniid``    zero-mean Gaussian whose per-band SNR is drawn from ``snr_range`` dB;
3. ``stripe``    case 2 plus constant-offset columns on a random subset of bands;
4. ``deadline``  case 2 plus zeroed columns on a random subset of bands;
5. ``impulse``   case 2 plus a fraction of pixels replaced by Uniform[0, 1] values;
6. ``mixture``   every band receives at least one of the kinds from cases 2-5.

All randomness is drawn up front into a :class:`NoiseMetadata` record.  The
corrupted cube is a pure function of the clean cube and that record (see
:func:`apply_metadata`), so the metadata reproduces the corruption exactly.
Gaussian noise for band ``j`` comes from its own generator seeded with
``(seed, j)``; structured corruption is applied after it in the order
stripes, impulse, deadlines.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from enum import Enum

import numpy as np

from .hsi_data import Cube

SNR_CAP_DB = 300.0


class NoiseCase(str, Enum):
    IID_GAUSSIAN = "iid"
    NONIID_GAUSSIAN = "noniid"
    GAUSSIAN_STRIPE = "stripe"
    GAUSSIAN_DEADLINE = "deadline"
    GAUSSIAN_IMPULSE = "impulse"
    MIXTURE = "mixture"


KINDS = ("gaussian", "stripe", "deadline", "impulse")


@dataclass(frozen=True)
class NoiseSpec:
    case: NoiseCase = NoiseCase.IID_GAUSSIAN
    sigma: float = 0.05
    snr_range: tuple = (5.0, 10.0)
    affected_band_fraction: float = 0.25
    stripes_range: tuple = (20, 40)
    deadlines_range: tuple = (5, 15)
    impulse_fraction_range: tuple = (0.5, 0.7)
    stripe_amplitude: float = 0.25
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "case", NoiseCase(self.case))
        if self.sigma < 0:
            raise ValueError("sigma must be non-negative")
        for name in ("snr_range", "stripes_range", "deadlines_range", "impulse_fraction_range"):
            lo, hi = getattr(self, name)
            if lo > hi or lo < 0:
                raise ValueError(f"{name} must be an ordered non-negative interval")
        for name in ("affected_band_fraction",):
            if not 0 <= getattr(self, name) <= 1:
                raise ValueError(f"{name} must lie in [0, 1]")
        if not 0 <= self.impulse_fraction_range[1] <= 1:
            raise ValueError("impulse fractions must lie in [0, 1]")


@dataclass
class BandNoise:
    """Everything drawn for one band."""

    band: int
    kinds: list = field(default_factory=list)
    noise_std: float = 0.0
    snr_db: float | None = None
    stripe_cols: list = field(default_factory=list)
    stripe_offsets: list = field(default_factory=list)
    deadline_cols: list = field(default_factory=list)
    impulse_fraction: float | None = None
    impulse_pixels: list = field(default_factory=list)
    impulse_values: list = field(default_factory=list)


@dataclass
class NoiseMetadata:
    case: str
    seed: int
    shape: tuple
    orientation: str
    bands: list

    def to_dict(self) -> dict:
        return {
            "case": self.case,
            "seed": self.seed,
            "shape": list(self.shape),
            "orientation": self.orientation,
            "bands": [asdict(b) for b in self.bands],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "NoiseMetadata":
        return cls(
            case=d["case"],
            seed=int(d["seed"]),
            shape=tuple(d["shape"]),
            orientation=d.get("orientation", "columns"),
            bands=[BandNoise(**b) for b in d["bands"]],
        )

    def to_json(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh)
            fh.write("\n")

    @classmethod
    def from_json(cls, path) -> "NoiseMetadata":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))


def _gaussian_draw(seed, band, size):
    return np.random.default_rng([seed, band]).standard_normal(size)


def _band_rng(seed, band):
    return np.random.default_rng([seed, band, 1])


def _draw_count(rng, bounds, cap):
    lo, hi = int(bounds[0]), int(bounds[1])
    return min(int(rng.integers(lo, hi + 1)), cap)


def _draw_band(rng, spec: NoiseSpec, clean_band, kinds, j) -> BandNoise:
    rows, cols = clean_band.shape
    info = BandNoise(band=j, kinds=list(kinds))
    if "gaussian" in kinds:
        if spec.case is NoiseCase.IID_GAUSSIAN:
            info.noise_std = float(spec.sigma)
        else:
            snr = float(rng.uniform(*spec.snr_range))
            info.snr_db = snr
            # scale the realized draw so the band hits the drawn SNR exactly
            z = _gaussian_draw(spec.seed, j, clean_band.shape)
            target = np.var(clean_band) / 10 ** (snr / 10)
            info.noise_std = float(np.sqrt(target / np.mean(z * z)))
    if "stripe" in kinds:
        count = _draw_count(rng, spec.stripes_range, cols)
        cols_ = np.sort(rng.choice(cols, size=count, replace=False))
        info.stripe_cols = cols_.tolist()
        amp = spec.stripe_amplitude
        info.stripe_offsets = rng.uniform(-amp, amp, size=count).tolist()
    if "impulse" in kinds:
        frac = float(rng.uniform(*spec.impulse_fraction_range))
        count = int(round(frac * rows * cols))
        info.impulse_fraction = frac
        info.impulse_pixels = np.sort(rng.choice(rows * cols, size=count, replace=False)).tolist()
        info.impulse_values = rng.uniform(0.0, 1.0, size=count).tolist()
    if "deadline" in kinds:
        count = _draw_count(rng, spec.deadlines_range, cols)
        info.deadline_cols = np.sort(rng.choice(cols, size=count, replace=False)).tolist()
    return info


def _band_kinds(spec: NoiseSpec, n_bands, rng):
    """Corruption kinds per band, plus the structured band subset."""
    case = spec.case
    if case in (NoiseCase.IID_GAUSSIAN, NoiseCase.NONIID_GAUSSIAN):
        return [("gaussian",)] * n_bands
    if case is NoiseCase.MIXTURE:
        out = []
        for _ in range(n_bands):
            chosen = [k for k, p in zip(KINDS, (0.5,) + (spec.affected_band_fraction,) * 3) if rng.random() < p]
            if not chosen:
                chosen = [KINDS[int(rng.integers(len(KINDS)))]]
            out.append(tuple(chosen))
        return out
    extra = {
        NoiseCase.GAUSSIAN_STRIPE: "stripe",
        NoiseCase.GAUSSIAN_DEADLINE: "deadline",
        NoiseCase.GAUSSIAN_IMPULSE: "impulse",
    }[case]
    n_affected = int(round(spec.affected_band_fraction * n_bands))
    affected = set(rng.choice(n_bands, size=n_affected, replace=False).tolist())
    return [("gaussian", extra) if j in affected else ("gaussian",) for j in range(n_bands)]


def draw_metadata(clean: Cube, spec: NoiseSpec) -> NoiseMetadata:
    """Draw every random quantity of a corruption without applying it."""
    rng = np.random.default_rng([spec.seed, clean.bands + 1, 7])
    kinds = _band_kinds(spec, clean.bands, rng)
    bands = [
        _draw_band(_band_rng(spec.seed, j), spec, clean.band(j), kinds[j], j) for j in range(clean.bands)
    ]
    return NoiseMetadata(
        case=spec.case.value, seed=int(spec.seed), shape=clean.shape, orientation="columns", bands=bands
    )


def gaussian_component(clean: Cube, meta: NoiseMetadata) -> np.ndarray:
    """The additive Gaussian noise implied by the metadata, shape of ``clean``."""
    out = np.zeros(clean.shape)
    for info in meta.bands:
        if "gaussian" in info.kinds and info.noise_std > 0:
            out[:, :, info.band] = info.noise_std * _gaussian_draw(meta.seed, info.band, clean.shape[:2])
    return out


def apply_metadata(clean: Cube, meta: NoiseMetadata, gaussian=True) -> Cube:
    """Rebuild the corrupted cube from the clean cube and the drawn metadata.

    With ``gaussian=False`` only the structured corruption is applied.
    """
    if tuple(meta.shape) != clean.shape:
        raise ValueError(f"metadata shape {tuple(meta.shape)} does not match cube {clean.shape}")
    data = clean.data.copy()
    if gaussian:
        data = data + gaussian_component(clean, meta)
    for info in meta.bands:
        band = data[:, :, info.band]
        if info.stripe_cols:
            band[:, info.stripe_cols] += np.asarray(info.stripe_offsets)
        if info.impulse_pixels:
            band.reshape(-1)[info.impulse_pixels] = info.impulse_values
        if info.deadline_cols:
            band[:, info.deadline_cols] = 0.0
    return Cube(data)


def corrupt(clean: Cube, spec: NoiseSpec):
    """Return ``(noisy_cube, metadata)`` for the requested case."""
    meta = draw_metadata(clean, spec)
    return apply_metadata(clean, meta), meta


def realized_snr(clean: Cube, noisy: Cube, band: int) -> float:
    """``10 log10(var(clean band) / mean squared noise)`` in dB, capped at 300."""
    if clean.shape != noisy.shape:
        raise ValueError("cubes must have the same shape")
    ref = clean.band(band)
    var = float(np.var(ref))
    if var == 0:
        raise ValueError(f"band {band} of the clean cube has zero variance; SNR undefined")
    mse = float(np.mean((noisy.band(band) - ref) ** 2))
    if mse == 0:
        return SNR_CAP_DB
    return min(10.0 * np.log10(var / mse), SNR_CAP_DB)


def planted_cube(rows, cols, bands, rank, seed=0, smoothness=3.0, contrast=3.0):
    """Exactly rank-``rank`` cube with values in [0, 1].

    Abundance maps are smoothed random fields pushed through a softmax (so they
    sum to one per pixel); endmember spectra are Gaussian bumps centred at
    evenly spread, jittered band positions on a constant floor.
    Returns ``(cube, abundances, spectra)``.
    """
    from scipy.ndimage import gaussian_filter

    rng = np.random.default_rng(seed)
    fields = rng.standard_normal((rank, rows, cols))
    fields = np.stack([gaussian_filter(f, smoothness, mode="wrap") for f in fields])
    fields /= fields.std(axis=(1, 2), keepdims=True) + 1e-12
    logits = contrast * fields
    logits -= logits.max(axis=0, keepdims=True)
    ab = np.exp(logits)
    ab /= ab.sum(axis=0, keepdims=True)
    abundances = ab.reshape(rank, rows * cols).T

    grid = np.linspace(0.0, 1.0, bands)
    centres = (np.arange(rank) + 0.5) / rank + rng.uniform(-0.25, 0.25, rank) / rank
    widths = rng.uniform(0.5, 1.0, rank) / rank
    spectra = 0.1 + 0.8 * np.exp(-0.5 * ((grid[:, None] - centres) / widths) ** 2)
    data = (abundances @ spectra.T).reshape(rows, cols, bands)
    return Cube(data), abundances, spectra
