"""Synthetic ultrasound-like dataset with independently planted class signals.

Each of the three signals lines up with one level of the visual tree:
texture contrast (global statistics), bright-region count and size
(segmentation features), and lateral placement asymmetry (spatial graph).
A fourth knob controls how strongly the clinical record correlates with the
class. All four at zero give statistically identical classes, which is the
leakage control.

Which signal dominates varies by clinical profile: low-performance patients
mostly express the asymmetry cue, obese patients the texture cue, the rest
the region cue. A single visual level therefore separates only part of the
positive cohort, and routing by the clinical/text context is genuinely
useful. Generation is seeded and byte-reproducible.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import ndimage

from .clinical import PatientRecord, save_patients_csv
from .numerics import Rng
from .pgm import GrayImage, LabelMask, save_pgm, save_pgm_mask

IMAGE_W, IMAGE_H = 192, 160


@dataclass(frozen=True)
class SignalStrengths:
    texture: float = 1.0
    regions: float = 1.0
    asymmetry: float = 1.0
    clinical: float = 1.0

    def validate(self):
        for name, value in self.__dict__.items():
            if value < 0:
                raise ValueError(f"signal {name} must be >= 0")

    @classmethod
    def null(cls) -> "SignalStrengths":
        return cls(texture=0.0, regions=0.0, asymmetry=0.0, clinical=0.0)


@dataclass(frozen=True)
class SynthSpec:
    patients: int = 24
    images_per_patient: int = 25  # average; totals are balanced to the ratio
    positive_fraction: float = 0.305
    signals: SignalStrengths = field(default_factory=SignalStrengths)
    seed: int = 0

    @property
    def total_images(self) -> int:
        return self.patients * self.images_per_patient


def _allocate_images(spec: SynthSpec):
    """Patient labels and per-patient image counts hitting the image-level
    positive fraction within one sample."""
    n_pos_patients = max(1, round(spec.positive_fraction * spec.patients))
    n_pos_patients = min(n_pos_patients, spec.patients - 1)
    total = spec.total_images
    target_pos = round(spec.positive_fraction * total)
    counts = []
    base, extra = divmod(target_pos, n_pos_patients)
    for i in range(n_pos_patients):
        counts.append(("sarcopenic", base + (1 if i < extra else 0)))
    n_ctrl = spec.patients - n_pos_patients
    base, extra = divmod(total - target_pos, n_ctrl)
    for i in range(n_ctrl):
        counts.append(("control", base + (1 if i < extra else 0)))
    return counts


def _make_patient(pid: str, label: str, sig: SignalStrengths, rng: Rng,
                  bucket: int = 0) -> PatientRecord:
    """Positive patients rotate through three clinical profiles (low
    performance / obesity / neither) so every expression bucket is populated;
    the shifts all scale with the clinical strength so a null-signal run
    leaves both classes identically distributed."""
    positive = label == "sarcopenic"
    s = sig.clinical if positive else 0.0
    sppb_shift, bmi_shift = ((5.0, 0.5), (0.5, 7.0), (1.0, 0.5))[bucket % 3]
    sex = "F" if rng.uniform() < 0.73 else "M"
    age = float(np.clip(66.0 + 7.0 * s + rng.normal() * 8.0, 50.0, 95.0))
    height = float(np.clip((162.0 if sex == "F" else 175.0) + rng.normal() * 6.0,
                           145.0, 195.0))
    bmi = float(np.clip(26.0 + bmi_shift * s + rng.normal() * 2.5, 17.0, 42.0))
    weight = bmi * (height / 100.0) ** 2
    sppb = int(np.clip(round(10.0 - sppb_shift * s + rng.normal() * 1.5), 0, 12))
    lam = 0.4 + 1.2 * s
    falls = 0
    acc = rng.uniform()
    # small-mean Poisson by inversion
    p = np.exp(-lam)
    cdf = p
    while acc > cdf and falls < 9:
        falls += 1
        p *= lam / falls
        cdf += p
    return PatientRecord(id=pid, age=round(age, 1), sex=sex,
                         height_cm=round(height, 1), weight_kg=round(weight, 1),
                         bmi=round(weight / (height / 100.0) ** 2, 1),
                         falls=falls, sppb=sppb, label=label)


def _speckle(rng: Rng, shape, amplitude: float) -> np.ndarray:
    noise = rng.normals(shape)
    smooth = ndimage.gaussian_filter(noise, sigma=1.2)
    return smooth * amplitude / max(smooth.std(), 1e-9)


def expression_profile(record: PatientRecord) -> tuple:
    """(texture, regions, asymmetry) expression weights for a patient.

    Mirrors the clinical-term thresholds: low physical performance shows up
    mainly as placement asymmetry, obesity mainly as texture change, the
    remaining patients mainly as region shrinkage.
    """
    if record.sppb <= 7:
        return (0.45, 0.8, 1.5)
    if record.bmi >= 30:
        return (1.5, 0.8, 0.45)
    return (0.8, 1.5, 0.8)


def _render_image(rng: Rng, positive: bool, sig: SignalStrengths,
                  expression: tuple = (1.0, 1.0, 1.0)):
    """One image + ground-truth blob mask."""
    h, w = IMAGE_H, IMAGE_W
    ys, xs = np.mgrid[0:h, 0:w].astype(np.float64)
    tex_w, reg_w, asym_w = expression
    s_tex = min(sig.texture * tex_w, 1.5)
    s_reg = min(sig.regions * reg_w, 1.5)
    s_asym = min(sig.asymmetry * asym_w, 1.5)

    # depth shading common to both classes
    base = 70.0 - 25.0 * (ys / h) + 8.0 * np.sin(xs / w * np.pi)

    amp = 26.0 * (1.0 - 0.30 * s_tex) if positive else 26.0
    amp *= 0.7 + 0.6 * rng.uniform()
    img = base + _speckle(rng, (h, w), amp)

    n_blobs = 6 - (round(1.5 * s_reg) if positive else 0)
    n_blobs = max(2, n_blobs + (rng.randint(3) - 1))
    radius_mean = 16.0 - (3.0 * s_reg if positive else 0.0)

    labels = np.zeros((h, w), dtype=np.int32)
    # both classes share the mirrored-pair placement law; positive images
    # compress blob positions toward one side in proportion to the signal,
    # so zero signal strength leaves the classes identically distributed
    centers = []
    for b in range(n_blobs):
        if b % 2 == 0:
            side = rng.uniform() * (w * 0.42) + w * 0.04
            centers.append(side)
        else:
            centers.append(w - centers[-1])
    if positive and s_asym > 0:
        squeeze = 1.0 - 0.5 * min(s_asym, 1.5) / 1.5
        centers = [c * squeeze for c in centers]
    for b, cx in enumerate(centers):
        cy = rng.uniform() * (h * 0.7) + h * 0.15
        r = max(5.0, radius_mean + rng.normal() * 3.5)
        ry = r * (0.6 + 0.3 * rng.uniform())  # elliptical cross-sections
        inside = ((xs - cx) / r) ** 2 + ((ys - cy) / ry) ** 2 <= 1.0
        brightness = 185.0 + rng.normal() * 12.0
        img = np.where(inside, brightness + _speckle(rng, (h, w), amp * 0.4), img)
        labels[inside] = b + 1

    pixels = np.clip(np.rint(img), 0, 255).astype(np.uint8)
    # relabel contiguous: overlapping blobs can erase earlier labels
    out = np.zeros_like(labels)
    next_id = 1
    for b in range(1, n_blobs + 1):
        where = labels == b
        if where.any():
            out[where] = next_id
            next_id += 1
    return (GrayImage(width=w, height=h, pixels=pixels),
            LabelMask(width=w, height=h, labels=out))


def generate_synthetic(spec: SynthSpec, out_dir) -> dict:
    """Write images/, masks/, patients.csv, manifest.json. Returns a summary
    with the dataset content hash."""
    spec.signals.validate()
    out_dir = Path(out_dir)
    (out_dir / "images").mkdir(parents=True, exist_ok=True)
    (out_dir / "masks").mkdir(parents=True, exist_ok=True)

    root = Rng(spec.seed)
    allocation = _allocate_images(spec)
    records = []
    sample_ids = []
    n_pos_images = 0
    for p_idx, (label, n_images) in enumerate(allocation):
        pid = f"p{p_idx:03d}"
        p_rng = root.derive(p_idx)
        record = _make_patient(pid, label, spec.signals, p_rng, bucket=p_idx)
        records.append(record)
        positive = label == "sarcopenic"
        expression = expression_profile(record)
        for i_idx in range(n_images):
            img_rng = p_rng.derive(1000 + i_idx)
            image, mask = _render_image(img_rng, positive, spec.signals,
                                        expression)
            sid = f"{pid}_{i_idx:03d}"
            save_pgm(out_dir / "images" / f"{sid}.pgm", image)
            save_pgm_mask(out_dir / "masks" / f"{sid}.pgm", mask)
            sample_ids.append(sid)
            n_pos_images += int(positive)

    save_patients_csv(out_dir / "patients.csv", records)
    content_hash = dataset_hash(out_dir)
    manifest = {
        "artifact": "synthetic-dataset",
        "seed": spec.seed,
        "patients": spec.patients,
        "images": len(sample_ids),
        "positive_images": n_pos_images,
        "positive_fraction": n_pos_images / len(sample_ids),
        "signals": spec.signals.__dict__,
        "content_hash": content_hash,
    }
    (out_dir / "manifest.json").write_text(json.dumps(manifest, indent=1,
                                                      sort_keys=True),
                                           encoding="utf-8")
    return manifest


def dataset_hash(directory) -> str:
    """sha256 over the data files (manifest excluded) in sorted path order."""
    directory = Path(directory)
    digest = hashlib.sha256()
    for path in sorted(directory.rglob("*")):
        if path.is_dir() or path.name == "manifest.json":
            continue
        rel = path.relative_to(directory).as_posix()
        digest.update(rel.encode())
        digest.update(path.read_bytes())
    return digest.hexdigest()
