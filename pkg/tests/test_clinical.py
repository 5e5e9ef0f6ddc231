import numpy as np
import pytest

from sonotree.clinical import (
    ClinicalEncoder,
    PatientRecord,
    derive_terms,
    encode_patient,
    fit_feature_scaler,
    load_patients_csv,
    raw_features,
    save_patients_csv,
)
from sonotree.numerics import ContractViolation, MinMaxScaler, Rng


def record(**over) -> PatientRecord:
    base = dict(id="p1", age=70.0, sex="F", height_cm=165.0, weight_kg=70.0,
                bmi=25.7, falls=0, sppb=10, label="control")
    base.update(over)
    return PatientRecord(**base)


class TestRecordValidation:
    def test_valid_record(self):
        record().validate()

    def test_age_range(self):
        with pytest.raises(ContractViolation):
            record(age=150.0).validate()

    def test_sppb_range(self):
        with pytest.raises(ContractViolation):
            record(sppb=13).validate()

    def test_bmi_consistency(self):
        with pytest.raises(ContractViolation):
            record(bmi=40.0).validate()  # far from 70/(1.65^2) = 25.7


class TestCsvRoundtrip:
    def test_roundtrip(self, tmp_path):
        recs = [record(), record(id="p2", sex="M", sppb=5, label="sarcopenic")]
        save_patients_csv(tmp_path / "p.csv", recs)
        back = load_patients_csv(tmp_path / "p.csv")
        assert [r.id for r in back] == ["p1", "p2"]
        assert back[1].label == "sarcopenic" and back[1].sppb == 5

    def test_label_optional(self, tmp_path):
        (tmp_path / "p.csv").write_text(
            "id,age,sex,height_cm,weight_kg,bmi,falls,sppb\n"
            "p9,80,M,170,65,22.5,1,6\n")
        back = load_patients_csv(tmp_path / "p.csv")
        assert back[0].label is None

    def test_missing_column_rejected(self, tmp_path):
        (tmp_path / "p.csv").write_text("id,age\np1,70\n")
        with pytest.raises(ContractViolation, match="missing columns"):
            load_patients_csv(tmp_path / "p.csv")


class TestEncoding:
    def test_output_dim_400(self):
        scaler = fit_feature_scaler([record(), record(id="p2", age=90.0)])
        enc = ClinicalEncoder.init(Rng(5))
        out = encode_patient(record(), scaler, enc)
        assert out.shape == (400,)

    def test_identical_records_identical_embeddings(self):
        scaler = fit_feature_scaler([record(), record(id="p2", age=90.0)])
        enc = ClinicalEncoder.init(Rng(5))
        a = encode_patient(record(), scaler, enc)
        b = encode_patient(record(id="other"), scaler, enc)
        assert np.array_equal(a, b)

    def test_sex_sensitivity(self):
        scaler = fit_feature_scaler([record(), record(id="p2", age=90.0)])
        enc = ClinicalEncoder.init(Rng(7))
        a = encode_patient(record(sex="M"), scaler, enc)
        b = encode_patient(record(sex="F"), scaler, enc)
        assert not np.allclose(a, b)

    def test_zero_parameters_give_bias_pattern(self):
        scaler = fit_feature_scaler([record(), record(id="p2", age=90.0)])
        enc = ClinicalEncoder.zeros()
        a = encode_patient(record(age=70.0), scaler, enc)
        b = encode_patient(record(age=90.0, id="x"), scaler, enc)
        assert np.array_equal(a, b) and np.all(a == 0.0)

    def test_unfitted_scaler_rejected(self):
        with pytest.raises(ContractViolation):
            encode_patient(record(), MinMaxScaler(), ClinicalEncoder.zeros())

    def test_raw_feature_layout(self):
        raw = raw_features(record(sex="M"))
        assert raw.shape == (8,)
        assert raw[0] == 1.0 and raw[1] == 0.0
        assert raw[2] == 70.0 and raw[7] == 10.0


class TestDeriveTerms:
    def test_published_example_patient(self):
        # 72-year-old female, bmi 32, sppb 5
        rec = record(age=72.0, bmi=32.0, weight_kg=87.1, sppb=5, sex="F")
        names = {t.term for t in derive_terms(rec)}
        assert {"Obesity", "Low Physical Performance", "Frailty",
                "Elderly Population", "Female phenotype", "Sarcopenia"} <= names

    def test_no_thresholds_crossed(self):
        rec = record(age=40.0, bmi=22.0, weight_kg=59.9, sppb=12, sex="M", falls=0)
        names = {t.term for t in derive_terms(rec)}
        assert names == {"Male phenotype", "Sarcopenia"}

    def test_bmi_exactly_30_inclusive(self):
        rec = record(bmi=30.0, weight_kg=81.7)
        assert "Obesity" in {t.term for t in derive_terms(rec)}

    def test_sppb_exactly_7_inclusive(self):
        rec = record(sppb=7)
        assert "Low Physical Performance" in {t.term for t in derive_terms(rec)}

    def test_falls_rule_off_by_default(self):
        rec = record(falls=4)
        assert "Recurrent Falls" not in {t.term for t in derive_terms(rec)}
        assert "Recurrent Falls" in {
            t.term for t in derive_terms(rec, include_falls_rule=True)}

    def test_deterministic_order(self):
        rec = record(age=72.0, bmi=32.0, weight_kg=87.1, sppb=5)
        assert derive_terms(rec) == derive_terms(rec)

    def test_each_term_single_tag_no_duplicates(self):
        rec = record(age=72.0, bmi=32.0, weight_kg=87.1, sppb=5, falls=3)
        terms = derive_terms(rec, include_falls_rule=True)
        pairs = [(t.term, t.tag) for t in terms]
        assert len(pairs) == len(set(pairs))
