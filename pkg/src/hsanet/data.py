"""Paired low/full-dose volume ingestion and patch sampling.

Volumes arrive either as a DICOM series directory (a minimal little-endian
reader is built in), as the documented raw fallback format (a text header
plus 16-bit little-endian slice files), or as .npy arrays. CT values are
converted to HU and normalized with a fixed [-1024, 3072] window; PET
values are min-max scaled per volume with the bounds recorded for
inversion. A synthetic phantom generator (piecewise-constant shapes plus
noise, non-clinical) backs desk-scale tests and the CLI's --synthetic mode.
"""

import os
import struct
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, DataError

CT_NORM_WINDOW = (-1024.0, 3072.0)
CT_DISPLAY_WINDOW = (-160.0, 240.0)

MODALITIES = ("ct", "pet", "synthetic")


# ---------------------------------------------------------------------------
# normalization
# ---------------------------------------------------------------------------

def dicom_to_hu(pixels, slope, intercept):
    """HU = slope * stored_value + intercept, elementwise."""
    if slope is None or intercept is None:
        raise ValueError("rescale slope and intercept are required to convert to HU")
    return np.asarray(pixels, dtype=np.float64) * float(slope) + float(intercept)


def normalize_ct(hu, window=CT_NORM_WINDOW):
    """Clamp HU to ``window`` and scale linearly to [0, 1]."""
    lo, hi = float(window[0]), float(window[1])
    if not lo < hi:
        raise ConfigError(f"degenerate HU window {window}: low must be < high")
    hu = np.asarray(hu, dtype=np.float64)
    return (np.clip(hu, lo, hi) - lo) / (hi - lo)


def denormalize_ct(x, window=CT_NORM_WINDOW):
    """Inverse of :func:`normalize_ct` for in-window values."""
    lo, hi = float(window[0]), float(window[1])
    return np.asarray(x, dtype=np.float64) * (hi - lo) + lo


def display_window_ct(hu):
    """The evaluation display window: [-160, 240] HU scaled to [0, 1]."""
    return normalize_ct(hu, CT_DISPLAY_WINDOW)


def normalize_pet(volume):
    """Min-max scale to [0, 1]; returns (scaled, (min, max)) for inversion."""
    volume = np.asarray(volume, dtype=np.float64)
    lo = float(volume.min())
    hi = float(volume.max())
    if not hi > lo:
        raise DataError(f"constant volume (min == max == {lo}): min-max scaling is degenerate")
    return (volume - lo) / (hi - lo), (lo, hi)


def denormalize_pet(x, bounds):
    lo, hi = float(bounds[0]), float(bounds[1])
    return np.asarray(x, dtype=np.float64) * (hi - lo) + lo


# ---------------------------------------------------------------------------
# volume pairs and patch sampling
# ---------------------------------------------------------------------------

@dataclass
class VolumePair:
    """Co-registered low/full-dose volume, normalized to [0, 1].

    ``normalization`` records how to invert: {"window": (lo, hi)} for CT,
    {"bounds": (min, max)} for PET.
    """

    low: np.ndarray
    full: np.ndarray
    modality: str
    spacing: tuple = (1.0, 1.0, 1.0)
    normalization: dict = field(default_factory=dict)

    def __post_init__(self):
        self.low = np.asarray(self.low, dtype=np.float64)
        self.full = np.asarray(self.full, dtype=np.float64)
        if self.low.shape != self.full.shape or self.low.ndim != 3:
            raise DataError(
                f"low/full shapes must match and be (S, H, W), got "
                f"{self.low.shape} vs {self.full.shape}"
            )
        if self.modality not in MODALITIES:
            raise DataError(f"unknown modality {self.modality!r}, expected one of {MODALITIES}")
        for name, arr in (("low", self.low), ("full", self.full)):
            if not np.isfinite(arr).all():
                raise DataError(f"{name} volume contains non-finite values")
            if arr.min() < 0.0 or arr.max() > 1.0:
                raise DataError(f"{name} volume is not normalized to [0, 1]")

    @property
    def num_slices(self):
        return self.low.shape[0]


@dataclass
class PatchBatch:
    """Aligned training patches, (B, 1, p, p) float32, plus source coordinates."""

    low: np.ndarray
    full: np.ndarray
    coords: list


def pair_from_ct_hu(low_hu, full_hu, spacing=(1.0, 1.0, 1.0), window=CT_NORM_WINDOW):
    return VolumePair(
        low=normalize_ct(low_hu, window),
        full=normalize_ct(full_hu, window),
        modality="ct",
        spacing=tuple(spacing),
        normalization={"window": (float(window[0]), float(window[1]))},
    )


def pair_from_pet_suv(low_suv, full_suv, spacing=(1.0, 1.0, 1.0)):
    # One shared min-max map (from the full-dose volume) keeps the pair
    # co-registered in intensity; the low-dose side is clipped to [0, 1].
    full_norm, bounds = normalize_pet(full_suv)
    lo, hi = bounds
    low_norm = np.clip((np.asarray(low_suv, dtype=np.float64) - lo) / (hi - lo), 0.0, 1.0)
    return VolumePair(
        low=low_norm,
        full=full_norm,
        modality="pet",
        spacing=tuple(spacing),
        normalization={"bounds": bounds},
    )


def extract_patches(pair, size=64, count=16, rng=0):
    """Sample ``count`` aligned patch pairs at uniform random slice/corner.

    ``rng`` may be a seed or a numpy Generator; a fixed seed reproduces the
    exact coordinate sequence.
    """
    if not isinstance(rng, np.random.Generator):
        rng = np.random.default_rng(rng)
    s, h, w = pair.low.shape
    if h < size or w < size:
        raise ValueError(f"volume slices {h}x{w} are smaller than the patch size {size}")
    low = np.empty((count, 1, size, size), dtype=np.float32)
    full = np.empty((count, 1, size, size), dtype=np.float32)
    coords = []
    for i in range(count):
        si = int(rng.integers(0, s))
        y = int(rng.integers(0, h - size + 1))
        x = int(rng.integers(0, w - size + 1))
        low[i, 0] = pair.low[si, y:y + size, x:x + size]
        full[i, 0] = pair.full[si, y:y + size, x:x + size]
        coords.append((si, y, x))
    return PatchBatch(low=low, full=full, coords=coords)


# ---------------------------------------------------------------------------
# synthetic phantoms (non-clinical, for desk-scale tests)
# ---------------------------------------------------------------------------

def synthetic_phantom_volume(slices=8, height=64, width=64, noise_sigma=0.05,
                             noise="gaussian", seed=0):
    """Piecewise-constant ellipse phantoms with additive or Poisson noise.

    Returns a VolumePair with modality "synthetic" (values already in
    [0, 1]); not clinical data.
    """
    rng = np.random.default_rng(seed)
    clean = np.empty((slices, height, width), dtype=np.float64)
    yy, xx = np.mgrid[0:height, 0:width]
    for s in range(slices):
        img = np.full((height, width), rng.uniform(0.08, 0.15))
        for _ in range(int(rng.integers(4, 9))):
            cy = rng.uniform(0.15 * height, 0.85 * height)
            cx = rng.uniform(0.15 * width, 0.85 * width)
            ry = rng.uniform(0.08 * height, 0.3 * height)
            rx = rng.uniform(0.08 * width, 0.3 * width)
            mask = ((yy - cy) / ry) ** 2 + ((xx - cx) / rx) ** 2 <= 1.0
            img[mask] = rng.uniform(0.25, 0.85)
        clean[s] = img
    if noise == "gaussian":
        low = clean + rng.normal(0.0, noise_sigma, size=clean.shape)
    elif noise == "poisson":
        counts = max(1.0, 1.0 / (noise_sigma * noise_sigma))
        low = rng.poisson(clean * counts) / counts
    else:
        raise ValueError(f"noise must be 'gaussian' or 'poisson', got {noise!r}")
    low = np.clip(low, 0.0, 1.0)
    return VolumePair(
        low=low,
        full=clean,
        modality="synthetic",
        normalization={"bounds": (0.0, 1.0)},
    )


# ---------------------------------------------------------------------------
# raw fallback format: text header + int16 little-endian slice files
# ---------------------------------------------------------------------------

RAW_REQUIRED_KEYS = ("slices", "height", "width", "data")


def write_raw_volume(directory, name, values, modality="ct", slope=1.0, intercept=0.0,
                     spacing=(1.0, 1.0, 1.0)):
    """Store a float volume as int16 slice files plus a text header.

    Stored integers satisfy ``value = slope * stored + intercept``; the
    caller picks slope/intercept so the quantities fit int16. Returns the
    header path.
    """
    values = np.asarray(values, dtype=np.float64)
    if values.ndim != 3:
        raise DataError(f"expected a (S, H, W) volume, got shape {values.shape}")
    stored = np.round((values - intercept) / slope)
    if stored.min() < -32768 or stored.max() > 32767:
        raise DataError(
            f"values do not fit int16 under slope={slope}, intercept={intercept}"
        )
    os.makedirs(directory, exist_ok=True)
    slice_files = []
    for i in range(values.shape[0]):
        fname = f"{name}_{i:04d}.raw"
        with open(os.path.join(directory, fname), "wb") as fh:
            fh.write(stored[i].astype("<i2").tobytes())
        slice_files.append(fname)
    header = os.path.join(directory, f"{name}.hdr.txt")
    with open(header, "w") as fh:
        fh.write(f"slices = {values.shape[0]}\n")
        fh.write(f"height = {values.shape[1]}\n")
        fh.write(f"width = {values.shape[2]}\n")
        fh.write("dtype = int16\n")
        fh.write("byte_order = little\n")
        fh.write(f"modality = {modality}\n")
        fh.write(f"spacing = {spacing[0]},{spacing[1]},{spacing[2]}\n")
        fh.write(f"slope = {slope}\n")
        fh.write(f"intercept = {intercept}\n")
        fh.write(f"data = {','.join(slice_files)}\n")
    return header


def read_raw_volume(header_path):
    """Read the raw fallback format; returns (values (S, H, W) float64, meta)."""
    meta = {}
    try:
        with open(header_path) as fh:
            for lineno, line in enumerate(fh, 1):
                line = line.strip()
                if not line or line.startswith("#"):
                    continue
                if "=" not in line:
                    raise DataError(f"{header_path}:{lineno}: expected 'key = value'")
                key, _, value = line.partition("=")
                meta[key.strip()] = value.strip()
    except OSError as exc:
        raise DataError(f"cannot read header {header_path}: {exc}") from exc
    for key in RAW_REQUIRED_KEYS:
        if key not in meta:
            raise DataError(f"{header_path}: missing required header key {key!r}")
    if meta.get("dtype", "int16") != "int16":
        raise DataError(f"{header_path}: unsupported dtype {meta['dtype']!r}")
    if meta.get("byte_order", "little") != "little":
        raise DataError(f"{header_path}: unsupported byte order {meta['byte_order']!r}")
    s, h, w = (int(meta[k]) for k in ("slices", "height", "width"))
    files = [f.strip() for f in meta["data"].split(",") if f.strip()]
    if len(files) != s:
        raise DataError(f"{header_path}: header lists {len(files)} files for {s} slices")
    base = os.path.dirname(os.path.abspath(header_path))
    volume = np.empty((s, h, w), dtype=np.float64)
    for i, fname in enumerate(files):
        path = os.path.join(base, fname)
        try:
            raw = np.fromfile(path, dtype="<i2")
        except OSError as exc:
            raise DataError(f"cannot read slice file {path}: {exc}") from exc
        if raw.size != h * w:
            raise DataError(f"{path}: expected {h * w} int16 values, found {raw.size}")
        volume[i] = raw.reshape(h, w)
    slope = float(meta.get("slope", 1.0))
    intercept = float(meta.get("intercept", 0.0))
    meta["spacing_tuple"] = tuple(
        float(v) for v in meta.get("spacing", "1,1,1").split(",")
    )
    return volume * slope + intercept, meta


# ---------------------------------------------------------------------------
# minimal DICOM reader (little-endian, uncompressed, read-only)
# ---------------------------------------------------------------------------

_IMPLICIT_LE = "1.2.840.10008.1.2"
_EXPLICIT_LE = "1.2.840.10008.1.2.1"
_LONG_VRS = {b"OB", b"OW", b"OF", b"SQ", b"UT", b"UN"}

_TAG_ROWS = (0x0028, 0x0010)
_TAG_COLS = (0x0028, 0x0011)
_TAG_BITS = (0x0028, 0x0100)
_TAG_SIGNED = (0x0028, 0x0103)
_TAG_INTERCEPT = (0x0028, 0x1052)
_TAG_SLOPE = (0x0028, 0x1053)
_TAG_INSTANCE = (0x0020, 0x0013)
_TAG_PIXELS = (0x7FE0, 0x0010)


def _scan_elements(blob, pos, explicit, path):
    """Yield ((group, elem), value_bytes, next_pos) until the blob ends."""
    n = len(blob)
    while pos + 8 <= n:
        group, elem = struct.unpack_from("<HH", blob, pos)
        pos += 4
        if explicit:
            vr = blob[pos:pos + 2]
            if vr in _LONG_VRS:
                length = struct.unpack_from("<I", blob, pos + 4)[0]
                pos += 8
            else:
                length = struct.unpack_from("<H", blob, pos + 2)[0]
                pos += 4
        else:
            length = struct.unpack_from("<I", blob, pos)[0]
            pos += 4
        if length == 0xFFFFFFFF:
            raise DataError(f"{path}: undefined-length elements are not supported")
        if pos + length > n:
            raise DataError(f"{path}: element ({group:04x},{elem:04x}) overruns the file")
        yield (group, elem), blob[pos:pos + length], pos + length
        pos += length


def read_dicom_slice(path):
    """Parse one uncompressed little-endian DICOM file.

    Returns (stored_pixels int array (H, W), slope, intercept, instance_number).
    Missing rescale tags raise DataError naming the file.
    """
    try:
        with open(path, "rb") as fh:
            blob = fh.read()
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc}") from exc
    if len(blob) < 132 or blob[128:132] != b"DICM":
        raise DataError(f"{path}: not a DICOM part-10 file (missing DICM marker)")

    syntax = _EXPLICIT_LE
    pos = 132
    for tag, value, nxt in _scan_elements(blob, pos, explicit=True, path=path):
        if tag[0] != 0x0002:
            break
        if tag == (0x0002, 0x0010):
            syntax = value.decode("ascii", "ignore").strip("\x00 ")
        pos = nxt
    if syntax not in (_IMPLICIT_LE, _EXPLICIT_LE):
        raise DataError(f"{path}: unsupported transfer syntax {syntax!r}")

    tags = {}
    for tag, value, nxt in _scan_elements(blob, pos, explicit=(syntax == _EXPLICIT_LE),
                                          path=path):
        if tag[0] == 0x0002:
            pos = nxt
            continue
        tags[tag] = value
        pos = nxt
        if tag == _TAG_PIXELS:
            break

    def _us(tag, name):
        if tag not in tags:
            raise DataError(f"{path}: missing {name} tag ({tag[0]:04x},{tag[1]:04x})")
        return struct.unpack("<H", tags[tag][:2])[0]

    rows = _us(_TAG_ROWS, "Rows")
    cols = _us(_TAG_COLS, "Columns")
    bits = _us(_TAG_BITS, "BitsAllocated")
    if bits != 16:
        raise DataError(f"{path}: only 16-bit pixel data is supported, got {bits}")
    signed = _TAG_SIGNED in tags and _us(_TAG_SIGNED, "PixelRepresentation") == 1

    if _TAG_SLOPE not in tags or _TAG_INTERCEPT not in tags:
        raise DataError(f"{path}: missing rescale slope/intercept tags")
    slope = float(tags[_TAG_SLOPE].decode("ascii").strip("\x00 "))
    intercept = float(tags[_TAG_INTERCEPT].decode("ascii").strip("\x00 "))

    instance = 0
    if _TAG_INSTANCE in tags:
        text = tags[_TAG_INSTANCE].decode("ascii").strip("\x00 ")
        instance = int(text) if text else 0

    if _TAG_PIXELS not in tags:
        raise DataError(f"{path}: missing PixelData")
    dtype = "<i2" if signed else "<u2"
    pixels = np.frombuffer(tags[_TAG_PIXELS], dtype=dtype, count=rows * cols)
    if pixels.size != rows * cols:
        raise DataError(f"{path}: PixelData holds {pixels.size} values, expected {rows * cols}")
    return pixels.reshape(rows, cols).astype(np.int32), slope, intercept, instance


def read_dicom_series(directory):
    """Read every DICOM file in a directory, ordered by instance number.

    Returns rescaled values (S, H, W) float64 (HU for CT series).
    """
    files = sorted(
        os.path.join(directory, f)
        for f in os.listdir(directory)
        if not f.startswith(".") and os.path.isfile(os.path.join(directory, f))
    )
    if not files:
        raise DataError(f"no DICOM files found in {directory}")
    slices = []
    for path in files:
        pixels, slope, intercept, instance = read_dicom_slice(path)
        slices.append((instance, dicom_to_hu(pixels, slope, intercept)))
    slices.sort(key=lambda item: item[0])
    shapes = {s[1].shape for s in slices}
    if len(shapes) != 1:
        raise DataError(f"{directory}: inconsistent slice shapes {sorted(shapes)}")
    return np.stack([s[1] for s in slices])


# ---------------------------------------------------------------------------
# manifests and pair loading
# ---------------------------------------------------------------------------

def read_manifest(path):
    """Parse a dataset manifest: one 'low_path, full_path, modality' per line.

    Paths are resolved relative to the manifest location; '#' starts a
    comment.
    """
    entries = []
    base = os.path.dirname(os.path.abspath(path))
    try:
        with open(path) as fh:
            lines = fh.readlines()
    except OSError as exc:
        raise DataError(f"cannot read manifest {path}: {exc}") from exc
    for lineno, line in enumerate(lines, 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        parts = [p.strip() for p in line.split(",")]
        if len(parts) != 3:
            raise DataError(
                f"{path}:{lineno}: expected 'low_path, full_path, modality', got {line!r}"
            )
        low, full, modality = parts
        modality = modality.lower()
        if modality not in MODALITIES:
            raise DataError(f"{path}:{lineno}: unknown modality {modality!r}")
        entries.append((os.path.join(base, low), os.path.join(base, full), modality))
    if not entries:
        raise DataError(f"manifest {path} lists no volume pairs")
    return entries


def load_volume_values(path):
    """Load one volume in physical units (HU / SUV / unit scale)."""
    if os.path.isdir(path):
        return read_dicom_series(path)
    if path.endswith(".npy"):
        try:
            values = np.load(path)
        except OSError as exc:
            raise DataError(f"cannot read {path}: {exc}") from exc
        if values.ndim == 2:
            values = values[None]
        if values.ndim != 3:
            raise DataError(f"{path}: expected a (S, H, W) array, got shape {values.shape}")
        return np.asarray(values, dtype=np.float64)
    if path.endswith(".txt"):
        values, _meta = read_raw_volume(path)
        return values
    raise DataError(f"{path}: unrecognized volume format (dir, .npy or .hdr.txt expected)")


def load_volume_pair(low_path, full_path, modality):
    """Load and normalize one co-registered pair."""
    low = load_volume_values(low_path)
    full = load_volume_values(full_path)
    if modality == "ct":
        return pair_from_ct_hu(low, full)
    if modality == "pet":
        return pair_from_pet_suv(low, full)
    low = np.clip(low, 0.0, 1.0)
    full = np.clip(full, 0.0, 1.0)
    return VolumePair(low=low, full=full, modality="synthetic",
                      normalization={"bounds": (0.0, 1.0)})


def load_pairs_from_manifest(path):
    return [load_volume_pair(*entry) for entry in read_manifest(path)]
