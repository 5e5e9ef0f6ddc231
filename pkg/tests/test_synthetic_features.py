import numpy as np
import pytest

from sonotree.features import (
    FeatureRecord,
    extract_dataset,
    read_features_jsonl,
    write_features_jsonl,
)
from sonotree.pgm import load_pgm, load_pgm_mask
from sonotree.synthetic import (
    SignalStrengths,
    SynthSpec,
    dataset_hash,
    generate_synthetic,
    _allocate_images,
)


@pytest.fixture(scope="module")
def small_dataset(tmp_path_factory):
    out = tmp_path_factory.mktemp("synth")
    spec = SynthSpec(patients=6, images_per_patient=3, seed=21)
    manifest = generate_synthetic(spec, out)
    return out, spec, manifest


class TestGenerator:
    def test_positive_fraction_at_full_scale(self):
        allocation = _allocate_images(SynthSpec())
        positive = sum(n for label, n in allocation if label == "sarcopenic")
        total = sum(n for _, n in allocation)
        assert total == 600
        assert abs(positive - round(0.305 * total)) <= 1

    def test_same_seed_identical_hash(self, small_dataset, tmp_path):
        out, spec, manifest = small_dataset
        again = generate_synthetic(spec, tmp_path / "again")
        assert manifest["content_hash"] == again["content_hash"]

    def test_different_seed_differs(self, small_dataset, tmp_path):
        out, spec, manifest = small_dataset
        other = generate_synthetic(
            SynthSpec(patients=6, images_per_patient=3, seed=99),
            tmp_path / "other")
        assert manifest["content_hash"] != other["content_hash"]

    def test_outputs_loadable_and_consistent(self, small_dataset):
        out, _, manifest = small_dataset
        images = sorted((out / "images").glob("*.pgm"))
        masks = sorted((out / "masks").glob("*.pgm"))
        assert len(images) == manifest["images"] == len(masks)
        img = load_pgm(images[0])
        mask = load_pgm_mask(masks[0])
        assert (img.width, img.height) == (mask.width, mask.height)
        assert mask.n_regions >= 1

    def test_patient_csv_valid(self, small_dataset):
        from sonotree.clinical import load_patients_csv
        out, _, _ = small_dataset
        records = load_patients_csv(out / "patients.csv")
        assert len(records) == 6
        labels = {r.label for r in records}
        assert labels == {"control", "sarcopenic"}

    def test_null_signals_match_distributions(self, tmp_path):
        spec = SynthSpec(patients=4, images_per_patient=2,
                         signals=SignalStrengths.null(), seed=3)
        generate_synthetic(spec, tmp_path / "null")
        from sonotree.clinical import load_patients_csv
        records = load_patients_csv(tmp_path / "null" / "patients.csv")
        # with zero clinical signal both classes draw from the same sppb law
        assert all(0 <= r.sppb <= 12 for r in records)

    def test_dataset_hash_ignores_manifest(self, small_dataset):
        out, _, manifest = small_dataset
        before = dataset_hash(out)
        (out / "manifest.json").write_text("{}")
        assert dataset_hash(out) == before


class TestFeatureJsonl:
    def test_roundtrip(self, tmp_path):
        rng = np.random.default_rng(5)
        features = {
            "p0_000": {level: rng.normal(size=400)
                       for level in ("coarse", "mid", "fine")},
            "p0_001": {level: rng.normal(size=400)
                       for level in ("coarse", "mid", "fine")},
        }
        path = tmp_path / "features.jsonl"
        write_features_jsonl(path, features)
        back = read_features_jsonl(path)
        assert set(back) == set(features)
        # 9 significant digits of precision survive the round trip
        assert np.allclose(back["p0_000"]["fine"],
                           features["p0_000"]["fine"], rtol=1e-8, atol=1e-12)

    def test_nine_significant_digits(self):
        rec = FeatureRecord(sample_id="x", level="coarse", shape=[2],
                            data=np.array([0.123456789123, 1e-17]))
        line = rec.to_json()
        assert "0.123456789" in line
        parsed = FeatureRecord.from_json(line)
        assert parsed.level == "coarse" and parsed.shape == [2]

    def test_extraction_workers_agree(self, small_dataset):
        out, _, _ = small_dataset
        paths = {p.stem: p for p in sorted((out / "images").glob("*.pgm"))}
        subset = dict(list(paths.items())[:4])
        serial = extract_dataset(subset, jobs=1)
        parallel = extract_dataset(subset, jobs=2)
        for sid in subset:
            for level in ("coarse", "mid", "fine"):
                assert np.array_equal(serial[sid][level], parallel[sid][level])

    def test_extracted_vectors_unit_norm(self, small_dataset):
        out, _, _ = small_dataset
        paths = {p.stem: p for p in sorted((out / "images").glob("*.pgm"))}
        subset = dict(list(paths.items())[:2])
        features = extract_dataset(subset, jobs=1)
        for sid, levels in features.items():
            for level, vec in levels.items():
                assert vec.shape == (400,)
                assert abs(np.linalg.norm(vec) - 1.0) <= 1e-9
