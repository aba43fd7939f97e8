"""Functional microstructure descriptors from micrograph grids or point sets.

Two estimators are provided: the two-point correlation (TPC) of a binary
phase mask, bucketed by integer pixel radius, and the radial distribution
function (RDF) of a particle set with a guard-region edge correction.  Both
are pure functions over immutable inputs.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np
from scipy import ndimage
from scipy.fft import next_fast_len

TPC = "tpc"
RDF = "rdf"

_N4 = np.array([[0, 1, 0], [1, 1, 1], [0, 1, 0]])


@dataclass(frozen=True)
class MicrostructureImage:
    """Grayscale micrograph with an optional two-phase mask.

    ``intensities`` is (height, width) with values in [0, 1]; ``phase_mask``
    marks pixels belonging to the phase of interest.
    """

    intensities: np.ndarray
    phase_mask: np.ndarray | None = None

    def __post_init__(self):
        arr = np.array(self.intensities, dtype=float)
        if arr.ndim != 2:
            raise ValueError("intensities must be a 2-D grid")
        if arr.size == 0:
            raise ValueError("empty image")
        if arr.min() < 0.0 or arr.max() > 1.0:
            raise ValueError("intensities must lie in [0, 1]")
        arr.setflags(write=False)
        object.__setattr__(self, "intensities", arr)
        if self.phase_mask is not None:
            mask = np.array(self.phase_mask, dtype=bool)
            if mask.shape != arr.shape:
                raise ValueError("phase_mask shape must match intensities")
            mask.setflags(write=False)
            object.__setattr__(self, "phase_mask", mask)

    @property
    def width(self) -> int:
        return self.intensities.shape[1]

    @property
    def height(self) -> int:
        return self.intensities.shape[0]


@dataclass(frozen=True)
class ParticleSet:
    """Point pattern in a rectangular window of size (width, height)."""

    coordinates: np.ndarray
    window: tuple

    def __post_init__(self):
        coords = np.array(self.coordinates, dtype=float).reshape(-1, 2)
        coords.setflags(write=False)
        object.__setattr__(self, "coordinates", coords)
        w, h = float(self.window[0]), float(self.window[1])
        object.__setattr__(self, "window", (w, h))
        if w <= 0 or h <= 0:
            raise ValueError("window sides must be positive")
        if coords.size:
            x, y = coords[:, 0], coords[:, 1]
            if x.min() < 0 or y.min() < 0 or x.max() > w or y.max() > h:
                raise ValueError("particle coordinates must lie inside the window")

    @property
    def n_particles(self) -> int:
        return self.coordinates.shape[0]


@dataclass(frozen=True)
class DescriptorCurve:
    """Descriptor values on an ascending distance grid."""

    r_grid: np.ndarray
    values: np.ndarray
    kind: str
    degenerate: bool = False

    def __post_init__(self):
        r = np.array(self.r_grid, dtype=float)
        v = np.array(self.values, dtype=float)
        if r.shape != v.shape or r.ndim != 1:
            raise ValueError("r_grid and values must be equal-length vectors")
        if self.kind not in (TPC, RDF):
            raise ValueError(f"unknown descriptor kind: {self.kind!r}")
        if self.kind == TPC and v.size and (v.min() < 0.0 or v.max() > 1.0):
            raise ValueError("TPC values must lie in [0, 1]")
        r.setflags(write=False)
        v.setflags(write=False)
        object.__setattr__(self, "r_grid", r)
        object.__setattr__(self, "values", v)


def binarize_image(img: MicrostructureImage, threshold: float = 0.5) -> MicrostructureImage:
    """Set the phase mask to intensities >= threshold."""
    if not (0.0 < threshold < 1.0):
        raise ValueError("threshold must lie in (0, 1)")
    return replace(img, phase_mask=img.intensities >= threshold)


def _shifted_overlap(mask: np.ndarray, dy: int, dx: int):
    """In-window pixel pairs at displacement (dy, dx): (a, b) boolean views."""
    h, w = mask.shape
    ys = (slice(0, h - dy), slice(dy, h)) if dy >= 0 else (slice(-dy, h), slice(0, h + dy))
    xs = (slice(0, w - dx), slice(dx, w)) if dx >= 0 else (slice(-dx, w), slice(0, w + dx))
    return mask[ys[0], xs[0]], mask[ys[1], xs[1]]


def _half_plane_displacements(r_max: int):
    """(dy, dx, round(|d|)) over the canonical half plane, radii 1..r_max."""
    dy, dx = np.mgrid[0:r_max + 1, -r_max:r_max + 1]
    keep = (dy > 0) | ((dy == 0) & (dx > 0))
    rr = np.rint(np.hypot(dx, dy)).astype(np.int64)
    keep &= rr <= r_max
    return dy[keep], dx[keep], rr[keep]


def _tpc_counts_direct(mask, dys, dxs, periodic):
    h, w = mask.shape
    hit = np.zeros(dys.size, dtype=np.int64)
    n_pairs = np.zeros(dys.size, dtype=np.int64)
    for i, (dy, dx) in enumerate(zip(dys.tolist(), dxs.tolist())):
        if periodic:
            shifted = np.roll(mask, shift=(dy, dx), axis=(0, 1))
            hit[i] = np.count_nonzero(mask & shifted)
            n_pairs[i] = h * w
        else:
            a, b = _shifted_overlap(mask, dy, dx)
            hit[i] = np.count_nonzero(a & b)
            n_pairs[i] = (h - abs(dy)) * (w - abs(dx))
    return hit, n_pairs


def _tpc_counts_fft(mask, dys, dxs, periodic, r_max):
    # circular autocorrelation; with >= r_max zero padding the wrap-free
    # region reproduces the windowed sums.  Counts are integers and the FFT
    # error is far below 0.5, so rounding recovers them exactly.
    h, w = mask.shape
    m = mask.astype(float)
    if periodic:
        sh, sw = h, w
    else:
        sh, sw = next_fast_len(h + r_max), next_fast_len(w + r_max)
    spec = np.fft.rfft2(m, s=(sh, sw))
    corr = np.fft.irfft2(spec * np.conj(spec), s=(sh, sw))
    counts = np.rint(corr).astype(np.int64)
    hit = counts[dys % sh, dxs % sw]
    if periodic:
        n_pairs = np.full(dys.size, h * w, dtype=np.int64)
    else:
        n_pairs = (h - np.abs(dys)) * (w - np.abs(dxs))
    return hit, n_pairs


def compute_tpc(img: MicrostructureImage, r_max: int, periodic: bool = False,
                method: str = "auto") -> DescriptorCurve:
    """Two-point correlation of the phase mask for integer radii 0..r_max.

    Each displacement vector d is bucketed by round(|d|); the value at radius
    r is the fraction of in-phase pixel pairs among all pixel pairs whose
    displacement falls in that bucket.  Non-periodic mode counts only pairs
    that stay inside the window.  values[0] equals the phase volume fraction.

    Hit and pair counts are exact integers under both the direct shifted-sum
    method and the FFT autocorrelation, so the result is bit-for-bit
    reproducible against a direct pair enumeration either way.  ``auto``
    switches to the FFT once the direct sweep would be expensive.
    """
    if img.phase_mask is None:
        raise ValueError("compute_tpc requires a phase mask (binarize first)")
    r_max = int(r_max)
    if r_max < 0:
        raise ValueError("r_max must be nonnegative")
    if r_max >= min(img.width, img.height) / 2:
        raise ValueError("r_max must be below half the image's shorter side")
    if method not in ("auto", "direct", "fft"):
        raise ValueError(f"unknown TPC method {method!r}")

    mask = img.phase_mask
    h, w = mask.shape
    if method == "auto":
        method = "fft" if r_max * r_max * h * w > 3e7 else "direct"

    dys, dxs, rrs = _half_plane_displacements(r_max)
    if method == "fft":
        hit, n_pairs = _tpc_counts_fft(mask, dys, dxs, periodic, r_max)
    else:
        hit, n_pairs = _tpc_counts_direct(mask, dys, dxs, periodic)

    hits = np.zeros(r_max + 1, dtype=np.int64)
    pairs = np.zeros(r_max + 1, dtype=np.int64)
    hits[0] = int(np.count_nonzero(mask))
    pairs[0] = h * w
    np.add.at(hits, rrs, 2 * hit)
    np.add.at(pairs, rrs, 2 * n_pairs)

    values = hits / pairs
    return DescriptorCurve(np.arange(r_max + 1, dtype=float), values, TPC)


def extract_particles(img: MicrostructureImage) -> ParticleSet:
    """One particle per 4-connected mask component, located at its centroid."""
    if img.phase_mask is None:
        raise ValueError("extract_particles requires a phase mask")
    labels, n = ndimage.label(img.phase_mask, structure=_N4)
    coords = np.zeros((n, 2))
    if n:
        centers = ndimage.center_of_mass(img.phase_mask, labels, range(1, n + 1))
        for i, (row, col) in enumerate(centers):
            coords[i] = (col, row)
    return ParticleSet(coords, (img.width, img.height))


def compute_rdf(ps: ParticleSet, r_max: float, dr: float) -> DescriptorCurve:
    """Radial distribution function with guard-region edge correction.

    Only particles at least r_max from every window edge act as references,
    so every annulus [b*dr, (b+1)*dr) around a reference lies fully inside
    the window.  g(b) = paircount(b) / (M_int * kappa * area(b)) with kappa
    the overall number density.  Degenerate inputs (M <= 1 or no interior
    reference) yield an all-zero curve with the degenerate flag set.
    """
    if dr <= 0:
        raise ValueError("dr must be positive")
    if r_max <= dr:
        raise ValueError("r_max must exceed dr")
    w, h = ps.window
    if r_max > min(w, h) / 2:
        raise ValueError("r_max larger than half the window's shorter side")

    n_bins = int(np.floor(r_max / dr + 1e-9))
    centers = (np.arange(n_bins) + 0.5) * dr
    edges_sq = (np.arange(n_bins + 1) * dr) ** 2
    areas = np.pi * np.diff(edges_sq)

    coords = ps.coordinates
    m = ps.n_particles
    if m <= 1:
        return DescriptorCurve(centers, np.zeros(n_bins), RDF, degenerate=True)

    x, y = coords[:, 0], coords[:, 1]
    interior = (x >= r_max) & (x <= w - r_max) & (y >= r_max) & (y <= h - r_max)
    m_int = int(np.count_nonzero(interior))
    if m_int == 0:
        return DescriptorCurve(centers, np.zeros(n_bins), RDF, degenerate=True)

    ref = coords[interior]
    diffs = ref[:, None, :] - coords[None, :, :]
    dists = np.hypot(diffs[..., 0], diffs[..., 1])
    # drop each reference's own entry by index (coincident pairs stay valid)
    self_cols = np.flatnonzero(interior)
    keep = np.ones(dists.shape, dtype=bool)
    keep[np.arange(m_int), self_cols] = False
    dists = dists[keep]

    bins = np.floor(dists / dr).astype(int)
    bins = bins[(bins >= 0) & (bins < n_bins)]
    counts = np.bincount(bins, minlength=n_bins).astype(float)

    kappa = m / (w * h)
    values = counts / (m_int * kappa * areas)
    return DescriptorCurve(centers, values, RDF)


# ---------------------------------------------------------------------------
# File formats: grayscale PGM (P2/P5) and the particle CSV
# ---------------------------------------------------------------------------

def load_pgm(path) -> MicrostructureImage:
    """Read an 8- or 16-bit grayscale PGM, normalizing intensities to [0, 1]."""
    with open(path, "rb") as fh:
        data = fh.read()

    tokens = []
    pos = 0
    while len(tokens) < 4 and pos < len(data):
        # skip whitespace and '#' comments between header tokens
        while pos < len(data) and data[pos:pos + 1].isspace():
            pos += 1
        if pos < len(data) and data[pos:pos + 1] == b"#":
            while pos < len(data) and data[pos:pos + 1] != b"\n":
                pos += 1
            continue
        start = pos
        while pos < len(data) and not data[pos:pos + 1].isspace():
            pos += 1
        if pos > start:
            tokens.append(data[start:pos])
    if len(tokens) < 4:
        raise ValueError(f"{path}: truncated PGM header")

    magic = tokens[0].decode("ascii", "replace")
    width, height, maxval = int(tokens[1]), int(tokens[2]), int(tokens[3])
    if width <= 0 or height <= 0 or not (0 < maxval <= 65535):
        raise ValueError(f"{path}: invalid PGM dimensions")

    if magic == "P2":
        values = np.array(data[pos:].split(), dtype=float)
        if values.size != width * height:
            raise ValueError(f"{path}: expected {width * height} samples, got {values.size}")
    elif magic == "P5":
        pos += 1  # single whitespace byte after maxval
        dtype = np.dtype(">u2") if maxval > 255 else np.dtype("u1")
        raw = data[pos:pos + width * height * dtype.itemsize]
        if len(raw) != width * height * dtype.itemsize:
            raise ValueError(f"{path}: truncated PGM payload")
        values = np.frombuffer(raw, dtype=dtype).astype(float)
    else:
        raise ValueError(f"{path}: unsupported PGM magic {magic!r}")

    grid = (values / maxval).reshape(height, width)
    return MicrostructureImage(grid)


def load_particles_csv(path) -> ParticleSet:
    """Read the particle CSV: '# window w h' line, 'x,y' header, then rows."""
    with open(path, encoding="utf-8") as fh:
        lines = [ln.strip() for ln in fh if ln.strip()]
    if not lines or not lines[0].startswith("#"):
        raise ValueError(f"{path}: missing '# window w h' header line")
    parts = lines[0].lstrip("#").split()
    if len(parts) != 3 or parts[0] != "window":
        raise ValueError(f"{path}: malformed window header {lines[0]!r}")
    window = (float(parts[1]), float(parts[2]))
    if len(lines) < 2 or [c.strip() for c in lines[1].split(",")] != ["x", "y"]:
        raise ValueError(f"{path}: expected 'x,y' column header")
    coords = [[float(v) for v in ln.split(",")] for ln in lines[2:]]
    return ParticleSet(np.array(coords).reshape(-1, 2), window)
