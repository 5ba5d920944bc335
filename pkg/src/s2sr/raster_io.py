"""Band-group and scene containers plus on-disk raster formats.

Two interchange formats are supported:

* ``geotiff`` -- one multi-band TIFF per group (float32, planar band order),
  georeferencing in standard GeoTIFF tags, band list and ground sample
  distance in a JSON ImageDescription.
* ``raw`` -- a dependency-light tensor file: magic ``S2SR``, little-endian
  u32 version, then the float32 pixel payload in C order ``[band, row, col]``.
  Metadata lives in a ``<name>.json`` sidecar with keys ``bands``, ``shape``
  and ``gsd_m`` (plus ``geo`` when georeferenced).

Both formats round-trip pixels, band order and gsd bit-exactly.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Mapping

import numpy as np

from .errors import CorruptRaster, IoFailure, MissingBand, ShapeMismatch, VersionMismatch

RAW_MAGIC = b"S2SR"
RAW_VERSION = 1

# Nominal digital-number scale of level-1C/2A products; pixel values are kept
# in this scale everywhere outside the model boundary.
DN_SCALE = 2000.0

HR_BANDS = ["B02", "B03", "B04", "B08"]
LR20_BANDS = ["B05", "B06", "B07", "B8A", "B11", "B12"]
LR60_BANDS = ["B01", "B09", "B10"]


@dataclass(frozen=True)
class GeoRef:
    """Affine georeference: ``x = a*col + b*row + c``, ``y = d*col + e*row + f``."""

    transform: tuple[float, float, float, float, float, float]
    crs: str  # e.g. "EPSG:32633"

    def scaled(self, factor: float) -> "GeoRef":
        """Georeference after changing the pixel size by ``factor`` (>1 = coarser)."""
        a, b, c, d, e, f = self.transform
        return GeoRef((a * factor, b * factor, c, d * factor, e * factor, f), self.crs)


@dataclass
class BandGroup:
    """A stack of co-registered bands at one resolution.

    ``pixels`` is float32 ``[band, row, col]`` in DN scale. All bands share
    one shape, values must be finite, and ``gsd_m`` is positive.
    """

    bands: list[str]
    pixels: np.ndarray
    gsd_m: float
    geo: GeoRef | None = None

    def __post_init__(self):
        self.pixels = np.ascontiguousarray(self.pixels, dtype=np.float32)
        self.validate()

    def validate(self):
        if self.pixels.ndim != 3:
            raise ShapeMismatch(f"pixels must be [band, row, col], got ndim={self.pixels.ndim}")
        if len(self.bands) != self.pixels.shape[0]:
            raise ShapeMismatch(
                f"{len(self.bands)} band ids but {self.pixels.shape[0]} pixel planes"
            )
        if not self.gsd_m > 0:
            raise ValueError(f"gsd_m must be positive, got {self.gsd_m}")
        if not np.isfinite(self.pixels).all():
            raise ValueError("pixel values must be finite")

    @property
    def shape(self) -> tuple[int, int]:
        """Spatial (rows, cols)."""
        return self.pixels.shape[1], self.pixels.shape[2]

    def band(self, name: str) -> np.ndarray:
        try:
            return self.pixels[self.bands.index(name)]
        except ValueError:
            raise MissingBand(f"band {name!r} not in group {self.bands}") from None

    def select(self, names: list[str]) -> "BandGroup":
        """Subset/reorder bands; raises MissingBand for absent names."""
        idx = []
        for n in names:
            if n not in self.bands:
                raise MissingBand(f"band {n!r} not in group {self.bands}")
            idx.append(self.bands.index(n))
        return BandGroup(list(names), self.pixels[idx], self.gsd_m, self.geo)


class ScalingMode(Enum):
    """Which lower-resolution group is super-resolved to the 10 m grid."""

    X2 = 2
    X6 = 6

    @property
    def factor(self) -> int:
        return self.value

    @property
    def target_bands(self) -> list[str]:
        return list(LR20_BANDS) if self is ScalingMode.X2 else list(LR60_BANDS)

    @property
    def out_bands(self) -> int:
        return len(self.target_bands)

    @classmethod
    def parse(cls, text: str) -> "ScalingMode":
        try:
            return cls[text.strip().upper()]
        except KeyError:
            raise ValueError(f"unknown scaling mode {text!r}; expected x2 or x6") from None


@dataclass
class Scene:
    """One multi-resolution acquisition.

    ``hr`` holds the four 10 m bands at W x H, ``lr20`` the six 20 m bands at
    W/2 x H/2 and ``lr60`` (optional) the three 60 m bands at W/6 x H/6. The
    HR extent is a multiple of 6 on both axes so both scaling factors tile
    exactly; ``crop`` records how many HR rows/cols the loader discarded to
    get there.
    """

    hr: BandGroup
    lr20: BandGroup
    lr60: BandGroup | None = None
    scene_id: str = ""
    crop: tuple[int, int] = (0, 0)

    def __post_init__(self):
        self.validate()

    def validate(self):
        if self.hr.bands != HR_BANDS:
            raise MissingBand(f"hr bands must be {HR_BANDS}, got {self.hr.bands}")
        if self.lr20.bands != LR20_BANDS:
            raise MissingBand(f"lr20 bands must be {LR20_BANDS}, got {self.lr20.bands}")
        if self.lr60 is not None and self.lr60.bands != LR60_BANDS:
            raise MissingBand(f"lr60 bands must be {LR60_BANDS}, got {self.lr60.bands}")
        h, w = self.hr.shape
        if h % 6 != 0 or w % 6 != 0:
            raise ShapeMismatch(f"hr shape {h}x{w} is not a multiple of 6")
        if self.lr20.shape != (h // 2, w // 2):
            raise ShapeMismatch(
                f"lr20 shape {self.lr20.shape} != hr/2 = {(h // 2, w // 2)}"
            )
        if self.lr60 is not None and self.lr60.shape != (h // 6, w // 6):
            raise ShapeMismatch(
                f"lr60 shape {self.lr60.shape} != hr/6 = {(h // 6, w // 6)}"
            )

    @property
    def has_lr60(self) -> bool:
        return self.lr60 is not None

    def supports(self, mode: ScalingMode) -> bool:
        return mode is ScalingMode.X2 or self.has_lr60


# ---------------------------------------------------------------------------
# raw tensor format


def _raw_sidecar(path: Path) -> Path:
    return path.with_suffix(".json")


def _save_raw(group: BandGroup, path: Path) -> None:
    payload = group.pixels.astype("<f4", copy=False)
    meta: dict = {
        "bands": group.bands,
        "shape": list(payload.shape),
        "gsd_m": group.gsd_m,
    }
    if group.geo is not None:
        meta["geo"] = {"transform": list(group.geo.transform), "crs": group.geo.crs}
    try:
        with open(path, "wb") as fh:
            fh.write(RAW_MAGIC)
            fh.write(struct.pack("<I", RAW_VERSION))
            fh.write(payload.tobytes(order="C"))
        _raw_sidecar(path).write_text(json.dumps(meta, sort_keys=True, indent=1) + "\n")
    except OSError as exc:
        raise IoFailure(f"cannot write {path}: {exc}") from exc


def _load_raw(path: Path) -> BandGroup:
    sidecar = _raw_sidecar(path)
    try:
        meta = json.loads(sidecar.read_text())
        blob = path.read_bytes()
    except OSError as exc:
        raise IoFailure(f"cannot read {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise CorruptRaster(f"bad sidecar {sidecar}: {exc}") from exc
    if blob[:4] != RAW_MAGIC:
        raise VersionMismatch(f"{path}: bad magic {blob[:4]!r}")
    (version,) = struct.unpack("<I", blob[4:8])
    if version != RAW_VERSION:
        raise VersionMismatch(f"{path}: unsupported raw version {version}")
    shape = tuple(meta["shape"])
    expected = 8 + 4 * int(np.prod(shape))
    if len(blob) != expected:
        raise CorruptRaster(f"{path}: payload is {len(blob)} bytes, expected {expected}")
    pixels = np.frombuffer(blob, dtype="<f4", offset=8).reshape(shape)
    geo = None
    if "geo" in meta:
        geo = GeoRef(tuple(meta["geo"]["transform"]), meta["geo"]["crs"])
    return BandGroup(list(meta["bands"]), pixels.copy(), float(meta["gsd_m"]), geo)


# ---------------------------------------------------------------------------
# GeoTIFF format (via tifffile; readable by GDAL-based tooling)

_TAG_MODEL_TRANSFORMATION = 34264
_TAG_GEO_KEYS = 34735


def _save_geotiff(group: BandGroup, path: Path) -> None:
    import tifffile

    desc = {"bands": group.bands, "gsd_m": group.gsd_m, "georeferenced": group.geo is not None}
    if group.geo is not None:
        a, b, c, d, e, f = group.geo.transform
    else:
        a, b, c, d, e, f = 1.0, 0.0, 0.0, 0.0, 1.0, 0.0
    # Row-major 4x4 model transformation: geo = M @ (col, row, 0, 1).
    model = (a, b, 0.0, c, d, e, 0.0, f, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 1.0)
    extratags = [(_TAG_MODEL_TRANSFORMATION, 12, 16, model, True)]
    if group.geo is not None and group.geo.crs.upper().startswith("EPSG:"):
        epsg = int(group.geo.crs.split(":", 1)[1])
        geokeys = (1, 1, 0, 3, 1024, 0, 1, 1, 1025, 0, 1, 1, 3072, 0, 1, epsg)
        extratags.append((_TAG_GEO_KEYS, 3, len(geokeys), geokeys, True))
    kwargs = {"planarconfig": "separate"} if len(group.bands) > 1 else {}
    try:
        tifffile.imwrite(
            path,
            group.pixels if len(group.bands) > 1 else group.pixels[0],
            photometric="minisblack",
            description=json.dumps(desc, sort_keys=True),
            extratags=extratags,
            **kwargs,
        )
    except OSError as exc:
        raise IoFailure(f"cannot write {path}: {exc}") from exc


def _load_geotiff(path: Path, bands: list[str] | None = None) -> BandGroup:
    import tifffile

    try:
        with tifffile.TiffFile(path) as tif:
            page = tif.pages[0]
            pixels = tif.asarray()
            desc = page.description
            model_tag = page.tags.get(_TAG_MODEL_TRANSFORMATION)
            geokeys_tag = page.tags.get(_TAG_GEO_KEYS)
            model = model_tag.value if model_tag is not None else None
            geokeys = geokeys_tag.value if geokeys_tag is not None else None
    except OSError as exc:
        raise IoFailure(f"cannot read {path}: {exc}") from exc
    except Exception as exc:  # undecodable TIFF
        raise CorruptRaster(f"{path}: {exc}") from exc

    if pixels.ndim == 2:
        pixels = pixels[None]
    meta = {}
    if desc:
        try:
            meta = json.loads(desc)
        except json.JSONDecodeError:
            meta = {}
    band_list = bands or meta.get("bands")
    if band_list is None:
        raise MissingBand(f"{path}: no band list in manifest or file metadata")
    gsd = float(meta.get("gsd_m", 0.0))
    geo = None
    if model is not None and meta.get("georeferenced", True):
        transform = (model[0], model[1], model[3], model[4], model[5], model[7])
        crs = ""
        if geokeys is not None:
            for i in range(4, len(geokeys), 4):
                if geokeys[i] == 3072:
                    crs = f"EPSG:{geokeys[i + 3]}"
        geo = GeoRef(tuple(float(v) for v in transform), crs)
    if gsd <= 0 and geo is not None:
        gsd = abs(geo.transform[0])
    if gsd <= 0:
        raise CorruptRaster(f"{path}: ground sample distance missing and not derivable")
    return BandGroup(list(band_list), pixels.astype(np.float32), gsd, geo)


# ---------------------------------------------------------------------------
# public save/load


def save_band_group(group: BandGroup, path, format: str = "raw") -> None:
    """Write ``group`` to ``path`` in the requested format ("geotiff" or "raw")."""
    path = Path(path)
    if format == "raw":
        _save_raw(group, path)
    elif format == "geotiff":
        _save_geotiff(group, path)
    else:
        raise ValueError(f"unknown raster format {format!r}")


def load_band_group(path, format: str | None = None, bands: list[str] | None = None) -> BandGroup:
    """Read a band group; the format is inferred from the extension when omitted."""
    path = Path(path)
    if not path.exists():
        raise IoFailure(f"no such raster: {path}")
    if format is None:
        format = "geotiff" if path.suffix.lower() in (".tif", ".tiff") else "raw"
    if format == "raw":
        group = _load_raw(path)
    elif format == "geotiff":
        group = _load_geotiff(path)
    else:
        raise ValueError(f"unknown raster format {format!r}")
    if bands is not None:
        group = group.select(list(bands))
    return group


# ---------------------------------------------------------------------------
# scene loading

_GROUP_BANDS = {"hr": HR_BANDS, "lr20": LR20_BANDS, "lr60": LR60_BANDS}


def _axis_crop(hr_n: int, lr20_n: int, lr60_n: int | None) -> int:
    """Largest n with hr>=6n, lr20>=3n, lr60>=n under the rounding tolerance.

    The 20 m/60 m extents must match the *original* HR extent up to rounding
    (floor or ceil of hr/2 and hr/6); anything else is a registration error,
    not a croppable margin.
    """
    if lr20_n not in (hr_n // 2, -(-hr_n // 2)):
        raise ShapeMismatch(f"lr20 extent {lr20_n} inconsistent with hr extent {hr_n}")
    if lr60_n is not None and lr60_n not in (hr_n // 6, -(-hr_n // 6)):
        raise ShapeMismatch(f"lr60 extent {lr60_n} inconsistent with hr extent {hr_n}")
    n = min(hr_n // 6, lr20_n // 3)
    if lr60_n is not None:
        n = min(n, lr60_n)
    return n


def load_scene(path, manifest: Mapping | str | Path) -> Scene:
    """Load a scene from ``path`` (a directory) described by ``manifest``.

    ``manifest`` maps group names (``hr``, ``lr20``, optional ``lr60``) to a
    raster filename or to ``{"file": name, "bands": [...]}``; it may be given
    inline or as a path to a JSON file relative to ``path``. Bands are
    reordered to the canonical order; HR extents are cropped from the
    top-left to the largest multiple of 6.
    """
    root = Path(path)
    if isinstance(manifest, (str, Path)):
        mpath = root / manifest if not Path(manifest).is_absolute() else Path(manifest)
        try:
            manifest = json.loads(Path(mpath).read_text())
        except OSError as exc:
            raise IoFailure(f"cannot read manifest {mpath}: {exc}") from exc
    if "hr" not in manifest or "lr20" not in manifest:
        raise MissingBand("manifest must name at least the hr and lr20 groups")

    groups: dict[str, BandGroup] = {}
    for name in ("hr", "lr20", "lr60"):
        if name not in manifest:
            continue
        entry = manifest[name]
        if isinstance(entry, str):
            entry = {"file": entry}
        declared = entry.get("bands")
        fpath = root / entry["file"]
        if not fpath.exists():
            raise IoFailure(f"{name}: no such raster {fpath}")
        fmt = "geotiff" if fpath.suffix.lower() in (".tif", ".tiff") else "raw"
        group = _load_geotiff(fpath, bands=declared) if fmt == "geotiff" else _load_raw(fpath)
        if declared is not None and fmt == "raw":
            if len(declared) != group.pixels.shape[0]:
                raise MissingBand(
                    f"{name}: manifest declares {len(declared)} bands for "
                    f"{group.pixels.shape[0]} planes"
                )
            group = BandGroup(list(declared), group.pixels, group.gsd_m, group.geo)
        required = _GROUP_BANDS[name]
        if set(required) - set(group.bands):
            missing = sorted(set(required) - set(group.bands))
            raise MissingBand(f"{name}: missing band(s) {missing}")
        groups[name] = group.select(required)

    hr, lr20 = groups["hr"], groups["lr20"]
    lr60 = groups.get("lr60")
    n_h = _axis_crop(hr.shape[0], lr20.shape[0], lr60.shape[0] if lr60 else None)
    n_w = _axis_crop(hr.shape[1], lr20.shape[1], lr60.shape[1] if lr60 else None)
    if n_h < 1 or n_w < 1:
        raise ShapeMismatch("scene too small: hr extent must be at least 6x6")
    crop = (hr.shape[0] - 6 * n_h, hr.shape[1] - 6 * n_w)

    def cut(g: BandGroup, h: int, w: int) -> BandGroup:
        if g.shape == (h, w):
            return g
        return BandGroup(g.bands, g.pixels[:, :h, :w], g.gsd_m, g.geo)

    hr = cut(hr, 6 * n_h, 6 * n_w)
    lr20 = cut(lr20, 3 * n_h, 3 * n_w)
    if lr60 is not None:
        lr60 = cut(lr60, n_h, n_w)
    scene_id = str(manifest.get("scene_id") or root.name)
    return Scene(hr=hr, lr20=lr20, lr60=lr60, scene_id=scene_id, crop=crop)


def save_scene(scene: Scene, path, format: str = "raw") -> dict:
    """Write all groups of ``scene`` under directory ``path``; returns the manifest."""
    root = Path(path)
    root.mkdir(parents=True, exist_ok=True)
    ext = ".tif" if format == "geotiff" else ".s2sr"
    manifest = {"scene_id": scene.scene_id}
    for name, group in (("hr", scene.hr), ("lr20", scene.lr20), ("lr60", scene.lr60)):
        if group is None:
            continue
        fname = name + ext
        save_band_group(group, root / fname, format=format)
        manifest[name] = fname
    (root / "scene.json").write_text(json.dumps(manifest, sort_keys=True, indent=1) + "\n")
    return manifest
