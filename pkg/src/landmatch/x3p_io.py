"""Reading and writing x3p (ISO 5436-2) surface containers.

An x3p file is a zip archive with an XML document ``main.xml`` describing the
grid (Record1 to Record4) and a binary member holding the height matrix.
Heights are stored with the x index varying fastest.

Inside the library every length is in micrometers.  Grids are indexed as
``heights[ix, iy]``: ``ix`` runs along the bullet axis (height above the base)
and ``iy`` along the circumference.
"""
from __future__ import annotations

import hashlib
import io
import logging
import math
import zipfile
import xml.etree.ElementTree as ET
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .errors import (
    ChecksumMismatchError,
    DimensionMismatchError,
    InvalidSurfaceError,
    MalformedMetadataError,
    MissingMemberError,
    UnsupportedSampleTypeError,
)

logger = logging.getLogger(__name__)

MAIN_XML = "main.xml"
DATA_BIN = "bindata/data.bin"
CHECKSUM_MEMBER = "md5checksum.hex"

# multiply a value in the declared unit by this to get micrometers
UNIT_TO_UM = {
    "m": 1e6,
    "mm": 1e3,
    "um": 1.0,
    "µm": 1.0,
    "micrometer": 1.0,
    "nm": 1e-3,
}

SAMPLE_TYPES = {"D": np.dtype("<f8"), "F": np.dtype("<f4")}

# fixed zip timestamp so identical surfaces give identical files
_ZIP_DATE = (1980, 1, 1, 0, 0, 0)


@dataclass(frozen=True)
class X3pMeta:
    size_x: int
    size_y: int
    increment_x: float
    increment_y: float
    offset_x: float = 0.0
    offset_y: float = 0.0
    revision: str = "ISO5436 - 2000"
    feature_type: str = "SUR"
    # Record2 (date, creator, instrument, ...) kept verbatim
    record2_xml: str | None = None

    def __post_init__(self):
        if self.size_x < 2 or self.size_y < 2:
            raise InvalidSurfaceError(
                f"grid must be at least 2x2, got {self.size_x}x{self.size_y}")
        for name in ("increment_x", "increment_y"):
            v = getattr(self, name)
            if not (math.isfinite(v) and v > 0):
                raise InvalidSurfaceError(f"{name} must be positive and finite, got {v}")

    @property
    def creator(self) -> str | None:
        return self._record2_text("Creator")

    @property
    def instrument(self) -> str | None:
        if self.record2_xml is None:
            return None
        node = ET.fromstring(self.record2_xml).find("Instrument")
        if node is None:
            return None
        parts = [(c.text or "").strip() for c in node]
        return " ".join(p for p in parts if p) or None

    def _record2_text(self, tag: str) -> str | None:
        if self.record2_xml is None:
            return None
        node = ET.fromstring(self.record2_xml).find(tag)
        return None if node is None else (node.text or "").strip()


@dataclass(frozen=True, eq=False)
class Surface:
    """Masked height grid in micrometers.

    ``valid[ix, iy]`` is False where the scanner dropped out; the
    corresponding entries of ``heights`` are NaN.
    """

    meta: X3pMeta
    heights: np.ndarray
    valid: np.ndarray = field(default=None)
    source_id: str = ""

    def __post_init__(self):
        h = np.array(self.heights, dtype=np.float64)
        shape = (self.meta.size_x, self.meta.size_y)
        if h.shape != shape:
            raise InvalidSurfaceError(f"heights shape {h.shape} does not match meta {shape}")
        if self.valid is None:
            valid = np.isfinite(h)
        else:
            valid = np.array(self.valid, dtype=bool)
            if valid.shape != shape:
                raise InvalidSurfaceError("mask shape does not match heights")
            if not np.all(np.isfinite(h[valid])):
                raise InvalidSurfaceError("unmasked heights must be finite")
        h[~valid] = np.nan
        h.setflags(write=False)
        valid.setflags(write=False)
        object.__setattr__(self, "heights", h)
        object.__setattr__(self, "valid", valid)

    @property
    def x_extent(self) -> float:
        return (self.meta.size_x - 1) * self.meta.increment_x

    @property
    def y_extent(self) -> float:
        return (self.meta.size_y - 1) * self.meta.increment_y

    def __eq__(self, other):
        if not isinstance(other, Surface):
            return NotImplemented
        return (self.meta == other.meta
                and np.array_equal(self.valid, other.valid)
                and np.array_equal(self.heights, other.heights, equal_nan=True))

    __hash__ = None

    @classmethod
    def from_array(cls, heights, increment_x: float, increment_y: float,
                   source_id: str = "", **meta_kw) -> "Surface":
        h = np.asarray(heights, dtype=np.float64)
        if h.ndim != 2:
            raise InvalidSurfaceError("heights must be a 2D array")
        meta = X3pMeta(size_x=h.shape[0], size_y=h.shape[1],
                       increment_x=float(increment_x), increment_y=float(increment_y),
                       **meta_kw)
        return cls(meta=meta, heights=h, source_id=source_id)

    def transposed(self) -> "Surface":
        m = self.meta
        meta = replace(m, size_x=m.size_y, size_y=m.size_x,
                       increment_x=m.increment_y, increment_y=m.increment_x,
                       offset_x=m.offset_y, offset_y=m.offset_x)
        return Surface(meta=meta, heights=self.heights.T, valid=self.valid.T,
                       source_id=self.source_id)


def _text(node: ET.Element | None, path: str, required: bool = True) -> str | None:
    child = None if node is None else node.find(path)
    if child is None or child.text is None:
        if required:
            raise MalformedMetadataError(f"missing element {path!r} in {MAIN_XML}")
        return None
    return child.text.strip()


def _float(node, path, required=True) -> float | None:
    raw = _text(node, path, required)
    if raw is None:
        return None
    try:
        return float(raw)
    except ValueError:
        raise MalformedMetadataError(f"element {path!r} is not a number: {raw!r}") from None


def _unit_scale(axis: ET.Element) -> float:
    unit = _text(axis, "Unit", required=False)
    if unit is None:
        return UNIT_TO_UM["m"]
    try:
        return UNIT_TO_UM[unit]
    except KeyError:
        raise MalformedMetadataError(f"unknown unit {unit!r}") from None


def read_x3p(path, swap_axes: bool = False, source_id: str | None = None) -> Surface:
    """Load an x3p file into a :class:`Surface` in micrometers.

    Lengths are taken to be in meters unless an axis carries a ``Unit``
    element (``m``, ``mm``, ``um``).  Non-finite samples become masked
    cells.  ``swap_axes`` transposes the grid for files whose CX axis runs
    along the circumference instead of the bullet axis.
    """
    path = Path(path)
    try:
        archive = zipfile.ZipFile(path)
    except zipfile.BadZipFile as exc:
        raise MissingMemberError(f"{path} is not an x3p archive: {exc}") from None
    with archive:
        names = set(archive.namelist())
        if MAIN_XML not in names:
            raise MissingMemberError(f"{path} has no {MAIN_XML}")
        xml_bytes = archive.read(MAIN_XML)
        _check_main_checksum(archive, names, xml_bytes, path)
        try:
            root = ET.fromstring(xml_bytes)
        except ET.ParseError as exc:
            raise MalformedMetadataError(f"cannot parse {MAIN_XML}: {exc}") from None
        # the root element is namespaced in the wild; children usually are not
        for el in root.iter():
            if "}" in el.tag:
                el.tag = el.tag.split("}", 1)[1]

        record1 = root.find("Record1")
        record3 = root.find("Record3")
        if record1 is None or record3 is None:
            raise MalformedMetadataError("Record1 and Record3 are required")
        axes = record1.find("Axes")
        if axes is None:
            raise MalformedMetadataError("Record1 has no Axes")
        cx, cy, cz = axes.find("CX"), axes.find("CY"), axes.find("CZ")
        if cx is None or cy is None or cz is None:
            raise MalformedMetadataError("Axes must define CX, CY and CZ")
        for axis, name in ((cx, "CX"), (cy, "CY")):
            if _text(axis, "AxisType") != "I":
                raise MalformedMetadataError(f"{name} must be an incremental axis")

        sx, sy, sz = _unit_scale(cx), _unit_scale(cy), _unit_scale(cz)
        inc_x = _float(cx, "Increment") * sx
        inc_y = _float(cy, "Increment") * sy
        off_x = (_float(cx, "Offset", required=False) or 0.0) * sx
        off_y = (_float(cy, "Offset", required=False) or 0.0) * sy

        sample_type = _text(cz, "DataType", required=False) or "D"
        if sample_type not in SAMPLE_TYPES:
            raise UnsupportedSampleTypeError(f"sample type {sample_type!r} is not supported")
        dtype = SAMPLE_TYPES[sample_type]

        dims = record3.find("MatrixDimension")
        try:
            nx = int(_text(dims, "SizeX"))
            ny = int(_text(dims, "SizeY"))
            nz = int(_text(dims, "SizeZ", required=False) or 1)
        except ValueError:
            raise MalformedMetadataError("matrix dimensions must be integers") from None
        if nz != 1:
            raise MalformedMetadataError("volumetric data (SizeZ != 1) is not supported")

        link = record3.find("DataLink")
        member = _text(link, "PointDataLink", required=False) or DATA_BIN
        if member not in names:
            raise MissingMemberError(f"{path} has no data member {member!r}")
        payload = archive.read(member)
        expected_md5 = _text(link, "MD5ChecksumPointData", required=False)
        if expected_md5:
            actual = hashlib.md5(payload).hexdigest()
            if actual.lower() != expected_md5.lower():
                raise ChecksumMismatchError(
                    f"{member} checksum {actual} does not match {expected_md5}")
        else:
            logger.warning("%s: no point data checksum, skipping validation", path)

    if len(payload) % dtype.itemsize:
        raise DimensionMismatchError(
            f"payload of {len(payload)} bytes is not a whole number of {dtype} samples")
    count = len(payload) // dtype.itemsize
    if count != nx * ny:
        raise DimensionMismatchError(
            f"declared {nx}x{ny} grid but payload holds {count} samples")
    raw = np.frombuffer(payload, dtype=dtype).astype(np.float64)
    heights = raw.reshape(ny, nx).T * sz
    valid = np.isfinite(heights)

    r2 = root.find("Record2")
    meta = X3pMeta(
        size_x=nx, size_y=ny, increment_x=inc_x, increment_y=inc_y,
        offset_x=off_x, offset_y=off_y,
        revision=_text(record1, "Revision", required=False) or "ISO5436 - 2000",
        feature_type=_text(record1, "FeatureType", required=False) or "SUR",
        record2_xml=None if r2 is None else ET.tostring(r2, encoding="unicode"),
    )
    surface = Surface(meta=meta, heights=np.where(valid, heights, np.nan), valid=valid,
                      source_id=source_id if source_id is not None else path.stem)
    return surface.transposed() if swap_axes else surface


def _check_main_checksum(archive, names, xml_bytes, path):
    if CHECKSUM_MEMBER not in names:
        logger.warning("%s: no %s, skipping validation", path, CHECKSUM_MEMBER)
        return
    line = archive.read(CHECKSUM_MEMBER).decode("ascii", errors="replace").strip()
    expected = line.split()[0] if line else ""
    actual = hashlib.md5(xml_bytes).hexdigest()
    if expected.lower() != actual:
        raise ChecksumMismatchError(f"{MAIN_XML} checksum {actual} does not match {expected}")


def _axis(parent, name, axis_type, increment=None, offset=None, unit=None, data_type=None):
    ax = ET.SubElement(parent, name)
    ET.SubElement(ax, "AxisType").text = axis_type
    ET.SubElement(ax, "DataType").text = data_type or "D"
    if increment is not None:
        ET.SubElement(ax, "Increment").text = repr(float(increment))
    if offset is not None:
        ET.SubElement(ax, "Offset").text = repr(float(offset))
    if unit is not None:
        ET.SubElement(ax, "Unit").text = unit
    return ax


def write_x3p(surface: Surface, path, unit: str = "um") -> None:
    """Write ``surface`` as an x3p archive.

    With the default ``unit="um"`` the file declares micrometers and the
    round trip through :func:`read_x3p` is exact.  ``unit="m"`` writes plain
    ISO 5436-2 meters for other tools, at the cost of one rounding per value.
    Masked cells are written as quiet NaN.
    """
    if unit not in ("um", "m", "mm"):
        raise ValueError(f"unsupported output unit {unit!r}")
    scale = 1.0 / UNIT_TO_UM[unit]
    m = surface.meta
    unit_tag = None if unit == "m" else unit

    def conv(v):
        return v if scale == 1.0 else v * scale

    root = ET.Element("ISO5436_2")
    r1 = ET.SubElement(root, "Record1")
    ET.SubElement(r1, "Revision").text = m.revision
    ET.SubElement(r1, "FeatureType").text = m.feature_type
    axes = ET.SubElement(r1, "Axes")
    _axis(axes, "CX", "I", conv(m.increment_x), conv(m.offset_x), unit_tag)
    _axis(axes, "CY", "I", conv(m.increment_y), conv(m.offset_y), unit_tag)
    _axis(axes, "CZ", "A", None, None, unit_tag)
    if m.record2_xml is not None:
        root.append(ET.fromstring(m.record2_xml))

    heights = np.where(surface.valid, surface.heights, np.nan)
    if scale != 1.0:
        heights = heights * scale
    payload = np.ascontiguousarray(heights.T, dtype="<f8").tobytes()

    r3 = ET.SubElement(root, "Record3")
    dims = ET.SubElement(r3, "MatrixDimension")
    ET.SubElement(dims, "SizeX").text = str(m.size_x)
    ET.SubElement(dims, "SizeY").text = str(m.size_y)
    ET.SubElement(dims, "SizeZ").text = "1"
    link = ET.SubElement(r3, "DataLink")
    ET.SubElement(link, "PointDataLink").text = DATA_BIN
    ET.SubElement(link, "MD5ChecksumPointData").text = hashlib.md5(payload).hexdigest()
    r4 = ET.SubElement(root, "Record4")
    ET.SubElement(r4, "ChecksumFile").text = CHECKSUM_MEMBER

    buf = io.BytesIO()
    ET.ElementTree(root).write(buf, encoding="utf-8", xml_declaration=True)
    xml_bytes = buf.getvalue()

    try:
        with zipfile.ZipFile(path, "w", compression=zipfile.ZIP_DEFLATED) as zf:
            for name, data in ((MAIN_XML, xml_bytes),
                               (CHECKSUM_MEMBER,
                                f"{hashlib.md5(xml_bytes).hexdigest()} *{MAIN_XML}\n".encode()),
                               (DATA_BIN, payload)):
                info = zipfile.ZipInfo(name, date_time=_ZIP_DATE)
                info.compress_type = zipfile.ZIP_DEFLATED
                info.external_attr = 0o644 << 16
                zf.writestr(info, data)
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc}") from exc
