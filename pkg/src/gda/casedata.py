"""Patient case records: data model, text serialization, synthetic generation,
and X-ray image preprocessing.

Case file grammar (one record per line, fields separated by single spaces):

    case_id gender age_months height_cm weight_kg [name=value ...] [DiagnosisLabel]

- the first five fields are positional and required;
- optional scalars follow as ``name=value`` pairs (``gestational_age_weeks``,
  ``birth_weight_kg``, ``birth_length_cm``, ``father_height_cm``,
  ``mother_height_cm``, ``bone_age_months``, ``xray``);
- lab values use a ``lab.`` prefix, e.g. ``lab.FT4=1.42``;
- a growth-hormone stimulation series is ``gh=min:val,min:val,...`` with
  strictly increasing minutes;
- an optional bare diagnosis label is the last token;
- ``#`` starts a comment line, blank lines are skipped.

Reals are rendered as shortest round-trip decimals, so parse(serialize(case))
reproduces every field exactly.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .errors import ParseError, ValidationError
from .textio import render_real


class DiagnosisLabel(enum.Enum):
    """Closed diagnosis set; ``value`` doubles as the wire name."""

    Normal = "Normal"
    Stunt = "Stunt"
    GHD = "GHD"
    GrowthRetardation = "GrowthRetardation"
    EarlyPuberty = "EarlyPuberty"
    PrecociousPuberty = "PrecociousPuberty"
    CentralPrecociousPuberty = "CentralPrecociousPuberty"
    IdiopathicShortStature = "IdiopathicShortStature"

    @property
    def index(self) -> int:
        return list(DiagnosisLabel).index(self)

    @property
    def display_name(self) -> str:
        return _DISPLAY_NAMES[self]


_DISPLAY_NAMES = {
    DiagnosisLabel.Normal: "Normal",
    DiagnosisLabel.Stunt: "Stunt",
    DiagnosisLabel.GHD: "Growth hormone deficiency",
    DiagnosisLabel.GrowthRetardation: "Growth retardation",
    DiagnosisLabel.EarlyPuberty: "Early puberty",
    DiagnosisLabel.PrecociousPuberty: "Precocious puberty",
    DiagnosisLabel.CentralPrecociousPuberty: "Central precocious puberty",
    DiagnosisLabel.IdiopathicShortStature: "Idiopathic short stature",
}

LABEL_COUNT = len(DiagnosisLabel)


@dataclass
class PatientCase:
    """One multimodal patient record."""

    case_id: str
    gender: str  # "male" | "female"
    age_months: float
    height_cm: float
    weight_kg: float
    gestational_age_weeks: float | None = None
    birth_weight_kg: float | None = None
    birth_length_cm: float | None = None
    father_height_cm: float | None = None
    mother_height_cm: float | None = None
    labs: dict[str, float] = field(default_factory=dict)
    gh_stimulation: list[tuple[float, float]] = field(default_factory=list)
    bone_age_months: float | None = None
    xray_path: str | None = None
    diagnosis: DiagnosisLabel | None = None

    @property
    def hormone_level(self) -> float:
        """Summary scalar: peak growth-hormone value over the stimulation
        series, 0.0 when no series was recorded."""
        if not self.gh_stimulation:
            return 0.0
        return max(value for _, value in self.gh_stimulation)


def validate_case(case: PatientCase) -> list[str]:
    """Every violated invariant, named by field; empty list means ok."""
    violations = []
    if not case.case_id:
        violations.append("case_id empty")
    if case.gender not in ("male", "female"):
        violations.append("gender")
    if not (0.0 < case.age_months <= 216.0):
        violations.append("age_months")
    if not (30.0 < case.height_cm < 220.0):
        violations.append("height_cm")
    if not (1.0 < case.weight_kg < 150.0):
        violations.append("weight_kg")
    minutes = [m for m, _ in case.gh_stimulation]
    if any(b <= a for a, b in zip(minutes, minutes[1:])):
        violations.append("gh_stimulation monotonicity")
    if case.bone_age_months is not None and not (0.0 < case.bone_age_months < 240.0):
        violations.append("bone_age_months")
    return violations


def _require_valid(case: PatientCase, line_number: int | None = None) -> PatientCase:
    violations = validate_case(case)
    if violations:
        raise ParseError(f"invalid case {case.case_id!r}: " + ", ".join(violations),
                         line_number=line_number, field=violations[0])
    return case


_OPTIONAL_REALS = (
    "gestational_age_weeks",
    "birth_weight_kg",
    "birth_length_cm",
    "father_height_cm",
    "mother_height_cm",
    "bone_age_months",
)


def serialize_case(case: PatientCase) -> str:
    parts = [
        case.case_id,
        case.gender,
        render_real(case.age_months),
        render_real(case.height_cm),
        render_real(case.weight_kg),
    ]
    for name in _OPTIONAL_REALS:
        value = getattr(case, name)
        if value is not None:
            parts.append(f"{name}={render_real(value)}")
    if case.xray_path is not None:
        parts.append(f"xray={case.xray_path}")
    if case.gh_stimulation:
        series = ",".join(f"{render_real(m)}:{render_real(v)}" for m, v in case.gh_stimulation)
        parts.append(f"gh={series}")
    for name in sorted(case.labs):
        parts.append(f"lab.{name}={render_real(case.labs[name])}")
    if case.diagnosis is not None:
        parts.append(case.diagnosis.value)
    return " ".join(parts)


def _parse_real(token: str, field_name: str, line_number: int | None) -> float:
    try:
        return float(token)
    except ValueError:
        raise ParseError(f"field {field_name!r}: {token!r} is not a number",
                         line_number=line_number, field=field_name) from None


def parse_case_line(line: str, line_number: int | None = None) -> PatientCase:
    tokens = line.split()
    if len(tokens) < 5:
        raise ParseError(f"expected at least 5 fields, got {len(tokens)}",
                         line_number=line_number, field="case_id")
    case = PatientCase(
        case_id=tokens[0],
        gender=tokens[1],
        age_months=_parse_real(tokens[2], "age_months", line_number),
        height_cm=_parse_real(tokens[3], "height_cm", line_number),
        weight_kg=_parse_real(tokens[4], "weight_kg", line_number),
    )
    rest = tokens[5:]
    for pos, token in enumerate(rest):
        if "=" not in token:
            if pos != len(rest) - 1:
                raise ParseError(f"bare token {token!r} is only allowed as a trailing label",
                                 line_number=line_number, field="diagnosis")
            try:
                case.diagnosis = DiagnosisLabel(token)
            except ValueError:
                raise ParseError(f"unknown diagnosis label {token!r}",
                                 line_number=line_number, field="diagnosis") from None
            continue
        name, _, raw = token.partition("=")
        if name in _OPTIONAL_REALS:
            setattr(case, name, _parse_real(raw, name, line_number))
        elif name == "xray":
            case.xray_path = raw
        elif name == "gh":
            series = []
            for pair in raw.split(","):
                minute, _, value = pair.partition(":")
                if not value:
                    raise ParseError(f"gh entry {pair!r} must be minute:value",
                                     line_number=line_number, field="gh_stimulation")
                series.append((_parse_real(minute, "gh_stimulation", line_number),
                               _parse_real(value, "gh_stimulation", line_number)))
            case.gh_stimulation = series
        elif name.startswith("lab."):
            case.labs[name[4:]] = _parse_real(raw, name, line_number)
        else:
            raise ParseError(f"unknown field {name!r}", line_number=line_number, field=name)
    return _require_valid(case, line_number)


def parse_cases(path: str | Path) -> list[PatientCase]:
    """Parse a case file; errors carry the 1-based line number."""
    path = Path(path)
    if not path.exists():
        raise ParseError(f"case file not found: {path}")
    cases = []
    seen = set()
    for number, line in enumerate(path.read_text(encoding="utf-8").splitlines(), start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        case = parse_case_line(stripped, line_number=number)
        if case.case_id in seen:
            raise ParseError(f"duplicate case_id {case.case_id!r}", line_number=number,
                             field="case_id")
        seen.add(case.case_id)
        cases.append(case)
    return cases


def write_cases(cases: list[PatientCase], path: str | Path) -> None:
    Path(path).write_text("".join(serialize_case(c) + "\n" for c in cases), encoding="utf-8")


# ---------------------------------------------------------------------------
# synthetic generation
# ---------------------------------------------------------------------------

def height_centerline(age_months: float) -> float:
    """Notional healthy height-for-age line (cm); desk-scale stand-in for a
    real growth reference."""
    return 52.0 + 0.55 * age_months


def weight_centerline(age_months: float) -> float:
    return 4.0 + 0.27 * age_months


HEIGHT_SD = 4.0
WEIGHT_SD = 2.0


def _round1(x: float) -> float:
    return round(float(x), 1)


def _label_counts(n: int, label_mix: dict[DiagnosisLabel, float]) -> dict[DiagnosisLabel, int]:
    total = sum(label_mix.values())
    if abs(total - 1.0) > 1e-9:
        raise ValidationError(f"label proportions sum to {total}, expected 1")
    if any(p < 0 for p in label_mix.values()):
        raise ValidationError("label proportions must be nonnegative")
    # largest-remainder rounding keeps every count within 1 of n * proportion
    raw = {label: n * p for label, p in label_mix.items()}
    counts = {label: int(raw[label]) for label in label_mix}
    leftover = n - sum(counts.values())
    by_remainder = sorted(label_mix, key=lambda lb: (counts[lb] - raw[lb], lb.index))
    for label in by_remainder[:leftover]:
        counts[label] += 1
    return counts


def generate_synthetic_cases(n: int, seed: int,
                             label_mix: dict[DiagnosisLabel, float] | None = None
                             ) -> list[PatientCase]:
    """Deterministic label-conditioned case generator.

    Each label plants a recoverable signature relative to the centerlines:
    short stature drops height 2-3 notional SD, growth-hormone deficiency adds
    a low stimulation peak, the precocious-puberty family advances bone age by
     12-30 months, growth retardation delays it. Every generated case passes
    ``validate_case``.
    """
    if n < 1:
        raise ValidationError(f"n must be >= 1, got {n}")
    if label_mix is None:
        label_mix = {label: 1.0 / LABEL_COUNT for label in DiagnosisLabel}
    counts = _label_counts(n, label_mix)
    labels = [label for label in DiagnosisLabel for _ in range(counts.get(label, 0))]
    rng = np.random.default_rng(seed)
    rng.shuffle(labels)

    cases = []
    for i, label in enumerate(labels):
        age = float(rng.uniform(30.0, 192.0))
        h_center = height_centerline(age)
        w_center = weight_centerline(age)
        gh_peak = float(rng.uniform(10.0, 20.0))
        bone_age = age + float(rng.uniform(-6.0, 6.0))
        h_off = float(rng.uniform(-1.0, 1.0))
        if label is DiagnosisLabel.Stunt:
            h_off = -float(rng.uniform(2.0, 3.0))
        elif label is DiagnosisLabel.GHD:
            h_off = -float(rng.uniform(2.0, 3.0))
            gh_peak = float(rng.uniform(1.0, 5.0))
            bone_age = age - float(rng.uniform(6.0, 18.0))
        elif label is DiagnosisLabel.GrowthRetardation:
            h_off = -float(rng.uniform(1.5, 2.5))
            bone_age = age - float(rng.uniform(12.0, 24.0))
        elif label is DiagnosisLabel.EarlyPuberty:
            h_off = float(rng.uniform(0.5, 1.5))
            bone_age = age + float(rng.uniform(12.0, 20.0))
        elif label is DiagnosisLabel.PrecociousPuberty:
            h_off = float(rng.uniform(1.0, 2.0))
            bone_age = age + float(rng.uniform(18.0, 26.0))
        elif label is DiagnosisLabel.CentralPrecociousPuberty:
            h_off = float(rng.uniform(1.0, 2.0))
            bone_age = age + float(rng.uniform(24.0, 30.0))
        elif label is DiagnosisLabel.IdiopathicShortStature:
            h_off = -float(rng.uniform(2.0, 3.0))
            bone_age = age - float(rng.uniform(0.0, 12.0))
        bone_age = max(2.0, bone_age)
        w_off = h_off * 0.6 + float(rng.uniform(-0.5, 0.5))
        series_minutes = (0.0, 30.0, 60.0, 90.0)
        fractions = (0.15, 0.45, 0.8, 1.0)
        case = PatientCase(
            case_id=f"c{i:03d}",
            gender="female" if rng.uniform() < 0.5 else "male",
            age_months=_round1(age),
            height_cm=_round1(h_center + h_off * HEIGHT_SD),
            weight_kg=_round1(max(2.0, w_center + w_off * WEIGHT_SD)),
            bone_age_months=_round1(bone_age),
            gh_stimulation=[(m, round(gh_peak * f, 2)) for m, f in zip(series_minutes, fractions)],
            labs={"blood_glucose": _round1(rng.uniform(3.9, 6.1))},
            diagnosis=label,
        )
        cases.append(_require_valid(case))
    return cases


# ---------------------------------------------------------------------------
# X-ray images
# ---------------------------------------------------------------------------

@dataclass
class XrayImage:
    """Grayscale radiograph: (H, W, 1) pixels in [0, 1]."""

    pixels: np.ndarray
    laterality_mark: str = "none"  # "L" | "R" | "none"
    source_id: str = ""

    def __post_init__(self):
        self.pixels = np.asarray(self.pixels, dtype=float)
        if self.pixels.ndim == 2:
            self.pixels = self.pixels[:, :, None]
        if self.pixels.ndim != 3 or self.pixels.shape[2] != 1:
            raise ValidationError(f"pixels must be (H, W, 1), got shape {self.pixels.shape}")
        if self.pixels.shape[0] < 1 or self.pixels.shape[1] < 1:
            raise ValidationError("image must have positive dimensions")
        if self.pixels.min() < 0.0 or self.pixels.max() > 1.0:
            raise ValidationError("pixel values must lie in [0, 1]")
        if self.laterality_mark not in ("L", "R", "none"):
            raise ValidationError(f"laterality_mark must be L, R or none, got {self.laterality_mark!r}")


def _bilinear_resize(plane: np.ndarray, target_h: int, target_w: int) -> np.ndarray:
    """Pixel-center bilinear resampling; convex, so constants and value ranges
    are preserved."""
    src_h, src_w = plane.shape
    ys = (np.arange(target_h) + 0.5) * (src_h / target_h) - 0.5
    xs = (np.arange(target_w) + 0.5) * (src_w / target_w) - 0.5
    ys = np.clip(ys, 0.0, src_h - 1.0)
    xs = np.clip(xs, 0.0, src_w - 1.0)
    y0 = np.floor(ys).astype(int)
    x0 = np.floor(xs).astype(int)
    y1 = np.minimum(y0 + 1, src_h - 1)
    x1 = np.minimum(x0 + 1, src_w - 1)
    wy = (ys - y0)[:, None]
    wx = (xs - x0)[None, :]
    top = plane[np.ix_(y0, x0)] * (1 - wx) + plane[np.ix_(y0, x1)] * wx
    bottom = plane[np.ix_(y1, x0)] * (1 - wx) + plane[np.ix_(y1, x1)] * wx
    return top * (1 - wy) + bottom * wy


def crop_window(src_h: int, src_w: int, target_h: int, target_w: int) -> tuple[int, int, int, int]:
    """Centered (top, left, height, width) crop with the target aspect ratio."""
    aspect = target_h / target_w
    if src_h / src_w > aspect:
        crop_w = src_w
        crop_h = max(1, round(src_w * aspect))
    else:
        crop_h = src_h
        crop_w = max(1, round(src_h / aspect))
    top = (src_h - crop_h) // 2
    left = (src_w - crop_w) // 2
    return top, left, crop_h, crop_w


def preprocess_xray(image: XrayImage, target_size: tuple[int, int]) -> XrayImage:
    """Aspect-preserving center crop followed by bilinear resize; the
    laterality mark carries through."""
    target_h, target_w = target_size
    if target_h < 1 or target_w < 1:
        raise ValidationError(f"target size must be positive, got {target_size}")
    src_h, src_w = image.pixels.shape[:2]
    if src_h < 2 or src_w < 2:
        raise ValidationError(f"source image {src_h}x{src_w} is degenerate")
    top, left, crop_h, crop_w = crop_window(src_h, src_w, target_h, target_w)
    cropped = image.pixels[top:top + crop_h, left:left + crop_w, 0]
    resized = _bilinear_resize(cropped, target_h, target_w)
    return XrayImage(pixels=resized[:, :, None], laterality_mark=image.laterality_mark,
                     source_id=image.source_id)


def anonymize_image(image: XrayImage, burn_in_region: tuple[int, int, int, int]) -> XrayImage:
    """Zero out the (top, left, height, width) region; all other pixels are
    bit-identical to the input."""
    top, left, height, width = burn_in_region
    src_h, src_w = image.pixels.shape[:2]
    if height < 0 or width < 0:
        raise ValidationError("burn-in region must have nonnegative extent")
    if top < 0 or left < 0 or top + height > src_h or left + width > src_w:
        raise ValidationError(
            f"burn-in region {burn_in_region} exceeds image bounds {src_h}x{src_w}"
        )
    pixels = image.pixels.copy()
    pixels[top:top + height, left:left + width, :] = 0.0
    return XrayImage(pixels=pixels, laterality_mark=image.laterality_mark,
                     source_id=image.source_id)


def load_xray(path: str | Path, laterality: str = "none") -> XrayImage:
    """Read an 8-bit grayscale PGM (binary P5) or PNG file."""
    from PIL import Image

    path = Path(path)
    if not path.exists():
        raise ValidationError(f"image file not found: {path}")
    with Image.open(path) as img:
        gray = img.convert("L")
        pixels = np.asarray(gray, dtype=float) / 255.0
    return XrayImage(pixels=pixels[:, :, None], laterality_mark=laterality,
                     source_id=path.name)


def save_xray(image: XrayImage, path: str | Path) -> None:
    """Write as 8-bit grayscale; format chosen by extension (.pgm -> binary P5,
    .png -> PNG)."""
    from PIL import Image

    data = np.clip(np.round(image.pixels[:, :, 0] * 255.0), 0, 255).astype(np.uint8)
    Image.fromarray(data, mode="L").save(Path(path))
