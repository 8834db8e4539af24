"""Metal implant artifacts and matched clean/metal pairs.

Pipeline for the corrupted image, in order: signal void inside the implant,
Gaussian RF excitation profile over off-resonance, readout-axis displacement
by forward splatting (pile-up and voids fall out of mass conservation), and
off-resonance phase accrued by TE.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import fourier
from .phantom import PhantomConfig, SequenceParams, TissueMaps, generate_phantom, spin_echo_signal

FWHM_TO_SIGMA = 1.0 / (2.0 * np.sqrt(2.0 * np.log(2.0)))


@dataclass
class ImplantSpec:
    center: tuple = (32.0, 32.0)     # (row, col) pixels
    rotation_deg: float = 0.0        # stem axis measured from the readout (row) axis
    shape: str = "capsule"
    half_length: float = 5.0         # capsule half-length, pixels
    radius: float = 2.5
    chi_ppm: float = 900.0           # CoCr
    peak_df_hz: float = 4000.0

    def mask(self, shape: tuple) -> np.ndarray:
        h, w = shape
        yy, xx = np.mgrid[0:h, 0:w].astype(np.float64)
        dy, dx = yy - self.center[0], xx - self.center[1]
        if self.shape == "disc":
            return dy ** 2 + dx ** 2 <= self.radius ** 2
        if self.shape != "capsule":
            raise ValueError(f"unknown implant shape {self.shape!r}")
        th = np.deg2rad(self.rotation_deg)
        uy, ux = np.cos(th), np.sin(th)
        t = np.clip(dy * uy + dx * ux, -self.half_length, self.half_length)
        return (dy - t * uy) ** 2 + (dx - t * ux) ** 2 <= self.radius ** 2

    def fits(self, shape: tuple) -> bool:
        """True if the implant's bounding extent lies inside the grid."""
        h, w = shape
        th = np.deg2rad(self.rotation_deg)
        ext = self.half_length if self.shape == "capsule" else 0.0
        ry = self.radius + abs(np.cos(th)) * ext
        rx = self.radius + abs(np.sin(th)) * ext
        cy, cx = self.center
        return ry <= cy <= h - 1 - ry and rx <= cx <= w - 1 - rx and self.mask(shape).any()


@dataclass
class ImplantConfig:
    shape: str = "capsule"
    half_length: float = 5.0
    radius: float = 2.5
    chi_ppm: float = 900.0
    peak_df_hz: float = 4000.0
    rf_fwhm_hz: float = 2250.0
    max_rotation_deg: float = 45.0
    max_shift_frac: float = 0.25      # translation box, fraction of width
    noise_std: float = 0.0            # complex Gaussian k-space noise, off by default


@dataclass
class PairedSample:
    clean_k: np.ndarray       # centred, complex64
    metal_k: np.ndarray
    implant_mask: np.ndarray  # bool
    clean_image: np.ndarray   # I* = |F^-1(clean_k)|
    metal_image: np.ndarray
    subject: int = 0
    placement: tuple = (0.0, 0.0, 0.0)   # (row, col, rotation_deg)

    @property
    def shape(self) -> tuple:
        return self.clean_k.shape


def dipole_kernel(shape: tuple) -> np.ndarray:
    """2D dipole kernel ``1/3 - ky^2/|k|^2`` on an origin-DC grid, ``D(0) = 0``.
    B0 is taken along the row (readout) axis."""
    h, w = shape
    ky = np.fft.fftfreq(h)[:, None]
    kx = np.fft.fftfreq(w)[None, :]
    k2 = ky ** 2 + kx ** 2
    with np.errstate(invalid="ignore", divide="ignore"):
        d = 1.0 / 3.0 - ky ** 2 / k2
    d[0, 0] = 0.0
    return d


def raw_dipole_field(chi: np.ndarray) -> np.ndarray:
    """Susceptibility map (ppm) convolved with the dipole kernel, on a 2x
    zero-padded grid to suppress wrap-around. Linear in ``chi``."""
    h, w = chi.shape
    padded = np.zeros((2 * h, 2 * w))
    padded[h // 2:h // 2 + h, w // 2:w // 2 + w] = chi
    field = fourier.ifft2(fourier.fft2(padded) * dipole_kernel(padded.shape)).real
    return field[h // 2:h // 2 + h, w // 2:w // 2 + w]


def dipole_field(implant: ImplantSpec, maps: TissueMaps) -> np.ndarray:
    """Off-resonance map (Hz) from tissue plus implant susceptibility, scaled so
    that ``max |df| == implant.peak_df_hz``."""
    chi = maps.susceptibility()
    chi[implant.mask(maps.shape)] = implant.chi_ppm
    raw = raw_dipole_field(chi)
    peak = np.abs(raw).max()
    if peak == 0.0:
        return np.zeros_like(raw)
    return raw * (implant.peak_df_hz / peak)


def rf_attenuation(df: np.ndarray, fwhm_hz: float) -> np.ndarray:
    sigma = fwhm_hz * FWHM_TO_SIGMA
    return np.exp(-(df ** 2) / (2.0 * sigma ** 2))


def splat_readout(image: np.ndarray, shift: np.ndarray) -> np.ndarray:
    """Forward-splat each pixel ``shift`` pixels along the row axis with linear
    weights. Destinations are clamped to the grid, so total mass is conserved."""
    h, w = image.shape
    dest = np.arange(h)[:, None] + shift
    lo = np.floor(dest)
    frac = dest - lo
    lo = lo.astype(np.int64)
    hi = np.clip(lo + 1, 0, h - 1)
    lo = np.clip(lo, 0, h - 1)
    cols = np.broadcast_to(np.arange(w)[None, :], (h, w))
    idx = np.concatenate([(lo * w + cols).ravel(), (hi * w + cols).ravel()])
    wts = np.concatenate([(image * (1.0 - frac)).ravel(), (image * frac).ravel()])
    return np.bincount(idx, weights=wts, minlength=h * w).reshape(h, w)


def apply_metal_artifacts(clean_image: np.ndarray, df: np.ndarray, implant_mask: np.ndarray,
                          seq: SequenceParams | None = None, rf_fwhm_hz: float = 2250.0) -> np.ndarray:
    """Complex corrupted image from a clean magnitude image and a field map."""
    seq = seq or SequenceParams()
    if clean_image.shape != df.shape or df.shape != implant_mask.shape:
        raise ValueError(f"shape mismatch: image {clean_image.shape}, field {df.shape}, mask {implant_mask.shape}")
    img = np.where(implant_mask, 0.0, clean_image.astype(np.float64))
    img = img * rf_attenuation(df, rf_fwhm_hz)
    img = splat_readout(img, df / seq.readout_bw_hz)
    return img * np.exp(1j * 2.0 * np.pi * df * (seq.te_ms * 1e-3))


def place_implant(rng: np.random.Generator, shape: tuple, cfg: ImplantConfig, tries: int = 100) -> ImplantSpec:
    h, w = shape
    box = cfg.max_shift_frac * w
    for _ in range(tries):
        spec = ImplantSpec(
            center=((h - 1) / 2 + rng.uniform(-box, box), (w - 1) / 2 + rng.uniform(-box, box)),
            rotation_deg=rng.uniform(-cfg.max_rotation_deg, cfg.max_rotation_deg),
            shape=cfg.shape, half_length=cfg.half_length, radius=cfg.radius,
            chi_ppm=cfg.chi_ppm, peak_df_hz=cfg.peak_df_hz,
        )
        if spec.fits(shape):
            return spec
    raise RuntimeError(f"could not place implant inside {shape} grid after {tries} tries")


def simulate_pair(maps: TissueMaps, implant: ImplantSpec, seq: SequenceParams, cfg: ImplantConfig,
                  rng: np.random.Generator | None = None, subject: int = 0) -> PairedSample:
    clean = spin_echo_signal(maps, seq)
    mask = implant.mask(maps.shape)
    df = dipole_field(implant, maps)
    corrupted = apply_metal_artifacts(clean, df, mask, seq, cfg.rf_fwhm_hz)
    clean_k = fourier.fftshift(fourier.fft2(clean))
    metal_k = fourier.fftshift(fourier.fft2(corrupted))
    if cfg.noise_std > 0:
        if rng is None:
            raise ValueError("noise requires an rng")
        noise = rng.standard_normal((2,) + clean_k.shape) * cfg.noise_std
        metal_k = metal_k + noise[0] + 1j * noise[1]
    clean_k = clean_k.astype(np.complex64)
    metal_k = metal_k.astype(np.complex64)
    full = np.ones(clean_k.shape[1], bool)
    return PairedSample(
        clean_k=clean_k,
        metal_k=metal_k,
        implant_mask=mask,
        clean_image=fourier.reconstruct(clean_k, full).astype(np.float32),
        metal_image=fourier.reconstruct(metal_k, full).astype(np.float32),
        subject=subject,
        placement=(float(implant.center[0]), float(implant.center[1]), float(implant.rotation_deg)),
    )


def make_paired_sample(seed, phantom_cfg: PhantomConfig | None = None, implant_cfg: ImplantConfig | None = None,
                       seq: SequenceParams | None = None, subject: int = 0, variant: int = 0) -> PairedSample:
    """Deterministic clean/metal pair for ``seed`` (an int or a sequence of ints)."""
    phantom_cfg = phantom_cfg or PhantomConfig()
    implant_cfg = implant_cfg or ImplantConfig()
    seq = seq or SequenceParams()
    seed = list(np.atleast_1d(seed).tolist())
    maps = generate_phantom(seed, phantom_cfg, variant)
    rng = np.random.default_rng(seed + [104729, variant])
    implant = place_implant(rng, maps.shape, implant_cfg)
    return simulate_pair(maps, implant, seq, implant_cfg, rng, subject)
