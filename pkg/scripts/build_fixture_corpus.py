#!/usr/bin/env python3
"""Regenerate the offline retrieval fixture corpus under src/sonotree/data/fixtures.

The corpus mimics recorded esearch/efetch responses and UMLS lookups so the
whole retrieval pipeline runs with no network. Deterministic by construction:
rerunning this script reproduces byte-identical files.
"""

from __future__ import annotations

import sys
from pathlib import Path

FIXTURES = Path(__file__).resolve().parents[1] / "src" / "sonotree" / "data" / "fixtures"

# ---------------------------------------------------------------------------
# article corpus: (pmid, title, abstract, themes)
# ---------------------------------------------------------------------------

ARTICLES = [
    ("9000001", "Ultrasound assessment of rectus femoris atrophy in older adults",
     "Muscle ultrasound provides a portable window into skeletal muscle quality. "
     "Rectus femoris thickness and cross-sectional area decline with advancing age. "
     "Increased echogenicity reflects fatty infiltration and fibrous replacement of muscle tissue. "
     "Quantitative texture analysis of ultrasound images separates sarcopenic from healthy muscle. "
     "Bedside imaging protocols support early sarcopenia screening in community settings.",
     ["sarcopenia", "ultrasound", "diagnosis", "muscle atrophy", "echogenicity"]),
    ("9000002", "Obesity, chronic inflammation, and skeletal muscle catabolism",
     "Adipose tissue in obesity secretes interleukin-6 and tumor necrosis factor alpha. "
     "These inflammatory cytokines accelerate proteolysis in skeletal muscle fibers. "
     "Sarcopenic obesity combines excess fat mass with depleted muscle mass. "
     "Chronic low-grade inflammation links high body mass index to muscle degradation. "
     "Weight management programs reduce inflammatory load and preserve lean mass.",
     ["obesity", "inflammation", "comorbidities", "muscle degradation"]),
    ("9000003", "Short Physical Performance Battery scores and frailty trajectories",
     "The Short Physical Performance Battery evaluates balance, gait speed, and chair stands. "
     "Scores of seven or lower identify older adults with low physical performance. "
     "Declining performance predicts incident frailty within three years. "
     "Gait speed alone captures much of the prognostic signal for disability. "
     "Serial testing tracks functional decline across the frailty spectrum.",
     ["sppb", "frailty", "prognosis", "low physical performance", "mobility"]),
    ("9000004", "Nutritional protein intake and muscle protein synthesis in aging",
     "Dietary protein distribution across meals modulates muscle protein synthesis. "
     "Older adults exhibit anabolic resistance requiring higher per-meal protein doses. "
     "Leucine-enriched supplements stimulate the mechanistic target of rapamycin pathway. "
     "Inadequate nutrition compounds age-related loss of muscle mass. "
     "Combined nutrition and resistance exercise outperforms either intervention alone.",
     ["nutrition", "protein", "risk factors", "exercise"]),
    ("9000005", "Recurrent falls in elderly populations with muscle weakness",
     "Muscle weakness of the lower limbs doubles the risk of recurrent falls. "
     "Fallers show reduced quadriceps strength and impaired postural control. "
     "Fear of falling restricts activity and accelerates deconditioning. "
     "Multifactorial fall prevention programs include strength training components. "
     "Fall history is an inexpensive screening question for sarcopenia risk.",
     ["falls", "muscle weakness", "risk factors", "elderly"]),
    ("9000006", "Diagnostic criteria for sarcopenia: the European consensus",
     "The European Working Group on Sarcopenia defines the condition by low muscle strength. "
     "Confirmation requires low muscle quantity or quality on imaging. "
     "Severe sarcopenia adds poor physical performance to the criteria. "
     "Case finding begins with the SARC-F questionnaire in primary care. "
     "Standardized cut points improve comparability across cohorts.",
     ["sarcopenia", "diagnosis", "criteria"]),
    ("9000007", "Echogenicity texture features predict muscle quality decline",
     "Gray-level texture statistics quantify ultrasound echogenicity patterns. "
     "Heterogeneous speckle texture correlates with intramuscular fat content. "
     "Texture contrast decreases as muscle fibers are replaced by connective tissue. "
     "Machine classifiers using texture features distinguish sarcopenic muscle with high accuracy. "
     "Texture analysis adds information beyond muscle thickness measurements.",
     ["echogenicity", "ultrasound", "diagnosis", "texture"]),
    ("9000008", "Inflammatory markers as prognostic indicators in sarcopenia",
     "Circulating interleukin-6 rises with age and tracks muscle loss. "
     "C-reactive protein elevation predicts accelerated strength decline. "
     "Tumor necrosis factor alpha impairs satellite cell regeneration. "
     "Anti-inflammatory interventions show modest benefits for muscle preservation. "
     "Inflammatory profiles may stratify patients for targeted therapy.",
     ["inflammation", "prognosis", "il-6"]),
    ("9000009", "Sex differences in muscle mass trajectories after age 65",
     "Men lose absolute muscle mass faster while women start from lower baselines. "
     "Postmenopausal hormonal changes accelerate loss of type II fibers in women. "
     "The female phenotype shows higher prevalence of sarcopenic obesity. "
     "Sex-specific reference values improve diagnostic accuracy of imaging. "
     "Screening programs should account for sex-dependent cut points.",
     ["sex", "elderly", "risk factors", "male", "female"]),
    ("9000010", "Mobility loss and life-space restriction in community elders",
     "Life-space mobility contracts years before overt disability appears. "
     "Slow gait speed signals early mobility impairment in elderly populations. "
     "Restricted mobility reduces muscle loading and accelerates atrophy. "
     "Community exercise programs expand life-space and preserve independence. "
     "Mobility metrics complement strength testing in geriatric assessment.",
     ["mobility", "elderly", "prognosis"]),
    ("9000011", "High body mass index masks low muscle mass on screening",
     "Standard body mass index cannot separate fat mass from lean mass. "
     "Obese older adults may harbor hidden sarcopenia despite high body weight. "
     "Sarcopenic obesity carries worse outcomes than either condition alone. "
     "Imaging-based body composition unmasks low muscularity in obesity. "
     "Clinicians should not rely on body mass index alone for muscle assessment.",
     ["obesity", "bmi", "diagnosis", "comorbidities"]),
    ("9000012", "Resistance exercise prescriptions for sarcopenic patients",
     "Progressive resistance training remains the most effective sarcopenia treatment. "
     "Twice-weekly sessions increase strength even in the ninth decade of life. "
     "Exercise combined with protein supplementation maximizes hypertrophy. "
     "Home-based programs achieve meaningful adherence with remote supervision. "
     "Strength gains translate into better chair-stand and stair performance.",
     ["exercise", "treatment", "nutrition", "protein"]),
    ("9000013", "Frailty syndrome overlaps with sarcopenia in geriatric clinics",
     "Frailty and sarcopenia share muscle weakness as a core component. "
     "Weight loss, exhaustion, and slowness define the frailty phenotype. "
     "Sarcopenia is considered the biological substrate of physical frailty. "
     "Dual diagnosis identifies patients at highest risk of adverse outcomes. "
     "Integrated care pathways address both conditions simultaneously.",
     ["frailty", "sarcopenia", "comorbidities", "diagnosis"]),
    ("9000014", "Muscle atrophy pathways: from disuse to denervation",
     "Disuse atrophy proceeds through suppressed protein synthesis within days. "
     "Denervation triggers fiber-type grouping and accelerated loss of motor units. "
     "The ubiquitin-proteasome system degrades contractile proteins during atrophy. "
     "Mitochondrial dysfunction contributes to reduced muscle endurance. "
     "Counteracting atrophy requires both loading and adequate nutrition.",
     ["muscle atrophy", "mechanism", "nutrition"]),
    ("9000015", "Falls risk stratification using performance batteries",
     "Balance testing identifies elders at elevated risk of recurrent falls. "
     "A history of two or more falls in a year warrants comprehensive assessment. "
     "Low Short Physical Performance Battery scores predict injurious falls. "
     "Quadriceps weakness on dynamometry refines fall-risk stratification. "
     "Targeted exercise halves fall rates in high-risk groups.",
     ["falls", "sppb", "risk factors", "prognosis"]),
    ("9000016", "Ultrasound echo intensity versus magnetic resonance fat fraction",
     "Echo intensity on ultrasound correlates with proton density fat fraction. "
     "Both modalities quantify myosteatosis in aging muscle. "
     "Ultrasound offers bedside availability at a fraction of the cost. "
     "Standardized gain settings are essential for reproducible echo intensity. "
     "Calibration phantoms reduce inter-device variability in multicenter studies.",
     ["ultrasound", "echogenicity", "diagnosis", "imaging"]),
    ("9000017", "Comorbidity burden accelerates muscle loss in older adults",
     "Diabetes mellitus doubles the rate of appendicular lean mass decline. "
     "Chronic kidney disease induces uremic myopathy and weakness. "
     "Heart failure promotes catabolic signaling in skeletal muscle. "
     "Multimorbidity compounds inactivity and nutritional deficits. "
     "Comorbidity-adjusted models improve sarcopenia risk prediction.",
     ["comorbidities", "risk factors", "muscle degradation"]),
    ("9000018", "Gait speed as a vital sign in elderly populations",
     "Usual gait speed predicts survival across diverse elderly cohorts. "
     "Speeds below one meter per second flag increased vulnerability. "
     "Gait speed integrates strength, balance, and cardiovascular fitness. "
     "Serial measurement detects meaningful functional change. "
     "Clinicians can measure gait speed in under a minute of clinic time.",
     ["mobility", "elderly", "prognosis", "gait"]),
    ("9000019", "Protein-energy malnutrition and sarcopenia risk in care homes",
     "Care home residents frequently consume less than recommended protein. "
     "Malnutrition universal screening correlates with low muscle mass. "
     "Oral nutritional supplements improve weight but need exercise for strength. "
     "Swallowing difficulties limit dietary protein in advanced age. "
     "Nutrition care plans should accompany resistance training programs.",
     ["nutrition", "protein", "risk factors"]),
    ("9000020", "Inflammation links visceral adiposity to muscle degradation",
     "Visceral fat area predicts loss of thigh muscle over five years. "
     "Adipokine imbalance favors catabolic signaling in myocytes. "
     "Interleukin-6 mediates part of the obesity-sarcopenia association. "
     "The link between obesity, inflammation, and muscle degradation is bidirectional. "
     "Reducing visceral fat improves both metabolic and muscle outcomes.",
     ["obesity", "inflammation", "muscle degradation", "comorbidities"]),
    ("9000021", "Sarcopenia prognosis: disability, hospitalization, and mortality",
     "Sarcopenic patients face twice the risk of incident disability. "
     "Hospitalized elders with low muscle mass stay longer and are readmitted more. "
     "Mortality hazard rises with each kilogram of grip strength lost. "
     "Early intervention may bend the trajectory of functional decline. "
     "Prognostic models combine muscle metrics with comorbidity indices.",
     ["sarcopenia", "prognosis", "outcomes"]),
    ("9000022", "Quadriceps ultrasound in transverse and longitudinal planes",
     "Transverse scans capture rectus femoris cross-sectional area reliably. "
     "Longitudinal scans display fascicle length and pennation angle. "
     "Probe orientation alters apparent muscle thickness by several percent. "
     "Standardized anatomical landmarks improve inter-rater reliability. "
     "Dual-plane protocols characterize muscle architecture comprehensively.",
     ["ultrasound", "imaging", "diagnosis"]),
    ("9000023", "Male phenotype and androgen decline in muscle aging",
     "Testosterone decline parallels loss of lean mass in aging men. "
     "Androgen receptors in type II fibers mediate hypertrophic signaling. "
     "Male patients present with sarcopenia at higher absolute strength thresholds. "
     "Hormonal screening complements imaging in selected male patients. "
     "Replacement therapy remains controversial for sarcopenia indications.",
     ["male", "sex", "risk factors"]),
    ("9000024", "Female phenotype, estrogen loss, and sarcopenic obesity",
     "Estrogen withdrawal at menopause accelerates muscle quality decline. "
     "Women accumulate intramuscular fat at higher rates after sixty. "
     "The female phenotype predominates in sarcopenic obesity cohorts. "
     "Sex hormones modulate satellite cell responsiveness to loading. "
     "Trials should report sex-stratified outcomes for muscle interventions.",
     ["female", "sex", "obesity", "risk factors"]),
    ("9000025", "Community screening pathways for sarcopenia diagnosis",
     "Community pharmacies can administer grip strength screening at scale. "
     "Positive screens proceed to ultrasound muscle quantity assessment. "
     "Point-of-care pathways shorten time from suspicion to diagnosis. "
     "Screening uptake improves when embedded in influenza vaccination visits. "
     "Cost-effectiveness analyses favor targeted over universal screening.",
     ["diagnosis", "sarcopenia", "screening"]),
    ("9000026", "Muscle weakness terminology: dynapenia versus sarcopenia",
     "Dynapenia denotes loss of strength independent of mass. "
     "Muscle weakness predicts outcomes better than muscle quantity alone. "
     "Terminological clarity aids communication across disciplines. "
     "Consensus definitions now center strength in the diagnostic algorithm. "
     "Research cohorts should report both strength and mass metrics.",
     ["muscle weakness", "diagnosis", "sarcopenia"]),
    ("9000027", "Elderly population demographics and the sarcopenia epidemic",
     "The global population over eighty will triple by mid-century. "
     "Prevalence of sarcopenia exceeds twenty percent in the oldest old. "
     "Health systems face rising demand for muscle health services. "
     "Preventive strategies must begin in middle age to be effective. "
     "Epidemiological surveillance requires harmonized diagnostic criteria.",
     ["elderly", "epidemiology", "risk factors"]),
    ("9000028", "Mitochondrial function and exercise response in aged muscle",
     "Aged muscle shows reduced mitochondrial oxidative capacity. "
     "Endurance exercise restores mitochondrial biogenesis signaling. "
     "Combined training modalities address both strength and endurance deficits. "
     "Exercise responsiveness persists into the tenth decade. "
     "Molecular profiling may personalize exercise prescriptions.",
     ["exercise", "mechanism", "treatment"]),
    ("9000029", "Postural balance, vestibular function, and recurrent falls",
     "Vestibular decline contributes to postural instability in old age. "
     "Recurrent falls cluster in patients with combined sensory deficits. "
     "Balance-specific exercise reduces sway and fall frequency. "
     "Home hazard modification complements physiological interventions. "
     "Fall clinics integrate strength, balance, and vision assessment.",
     ["falls", "risk factors", "prognosis"]),
    ("9000030", "Imaging biomarkers for early muscle degradation detection",
     "Texture heterogeneity precedes measurable thickness loss in aging muscle. "
     "Shear-wave elastography detects increased stiffness of fibrotic muscle. "
     "Radiomic pipelines extract hundreds of quantitative imaging features. "
     "Early biomarkers enable intervention before functional decline. "
     "Multimodal imaging panels outperform single measurements.",
     ["imaging", "ultrasound", "diagnosis", "muscle degradation"]),
]

# ---------------------------------------------------------------------------
# UMLS concept fixtures: term -> (cui, preferred name, synonyms, related terms)
# ---------------------------------------------------------------------------

CONCEPTS = {
    "sarcopenia": ("C0872084", "Sarcopenia",
                   ["age-related muscle loss", "muscle wasting"],
                   ["muscle atrophy", "muscle weakness"]),
    "obesity": ("C0028754", "Obesity",
                ["adiposity", "high body mass index"],
                ["inflammation", "sarcopenia"]),
    "high body mass index": ("C1319571", "High Body Mass Index",
                             ["elevated bmi", "obesity"], ["obesity"]),
    "low physical performance": ("C3552802", "Low Physical Performance",
                                 ["poor physical function", "low sppb score"],
                                 ["frailty", "mobility loss"]),
    "frailty": ("C0424594", "Frailty",
                ["frailty syndrome", "frail elderly"],
                ["sarcopenia", "muscle weakness"]),
    "elderly population": ("C0001792", "Elderly Population",
                           ["aged", "older adults", "geriatric population"],
                           ["frailty"]),
    "male phenotype": ("C0086582", "Male",
                       ["male sex", "men"], []),
    "female phenotype": ("C0086287", "Female",
                         ["female sex", "women"], []),
    "recurrent falls": ("C0000921", "Recurrent Falls",
                        ["accidental falls", "repeated falls"],
                        ["muscle weakness"]),
    "muscle weakness": ("C0151786", "Muscle Weakness",
                        ["sarcopenia", "frailty", "muscle atrophy"],
                        ["sarcopenia"]),
    "muscle atrophy": ("C0026846", "Muscle Atrophy",
                       ["muscular atrophy", "muscle wasting"],
                       ["sarcopenia"]),
    "inflammation": ("C0021368", "Inflammation",
                     ["inflammatory response", "il-6 elevation"],
                     ["muscle degradation"]),
    "muscle degradation": ("C5203670", "Muscle Degradation",
                           ["muscle catabolism", "proteolysis"],
                           ["muscle atrophy"]),
    "mobility loss": ("C0026649", "Mobility Loss",
                      ["mobility limitation", "impaired mobility"],
                      ["frailty"]),
    "nutrition": ("C0028707", "Nutrition",
                  ["dietary intake", "nutritional status"], []),
    "muscle": ("C0026845", "Skeletal Muscle",
               ["muscle tissue", "musculature"], ["muscle atrophy"]),
    "exercise": ("C0015259", "Exercise",
                 ["physical activity", "resistance training"], []),
    "ultrasound": ("C0041618", "Ultrasonography",
                   ["ultrasound imaging", "sonography"], []),
    "echogenicity": ("C2348975", "Echogenicity",
                     ["echo intensity"], ["ultrasound"]),
    "protein": ("C0033684", "Dietary Protein",
                ["protein intake"], ["nutrition"]),
    "gait": ("C0016928", "Gait",
             ["gait speed", "walking speed"], ["mobility loss"]),
    "falls": ("C0000921", "Recurrent Falls",
              ["accidental falls"], ["muscle weakness"]),
}

THEME_OF_CONCEPT = {
    "sarcopenia": "sarcopenia", "obesity": "obesity",
    "high body mass index": "bmi", "low physical performance": "sppb",
    "frailty": "frailty", "elderly population": "elderly",
    "male phenotype": "male", "female phenotype": "female",
    "recurrent falls": "falls", "muscle weakness": "muscle weakness",
    "muscle atrophy": "muscle atrophy", "inflammation": "inflammation",
    "muscle degradation": "muscle degradation", "mobility loss": "mobility",
    "nutrition": "nutrition", "muscle": "muscle atrophy",
    "exercise": "exercise", "ultrasound": "ultrasound",
    "echogenicity": "echogenicity", "protein": "protein",
    "gait": "gait", "falls": "falls",
}

TEMPLATE_SUFFIXES = {
    "diagnosis": "diagnosis",
    "risk factors": "risk factors",
    "comorbidities": "comorbidities",
    "prognosis": "prognosis",
}


def term_slug(term: str) -> str:
    import re
    slug = re.sub(r"[^a-z0-9]+", "-", term.lower()).strip("-")
    return slug or "empty"


def pmids_for(theme: str, suffix: str) -> list:
    """Deterministic relevance ranking: theme match first, then suffix match."""
    primary, secondary = [], []
    for pmid, _title, _abstract, themes in ARTICLES:
        if theme in themes:
            primary.append(pmid)
        elif suffix in themes:
            secondary.append(pmid)
    return (primary + secondary)[:10]


def esearch_xml(pmids: list) -> str:
    ids = "".join(f"<Id>{p}</Id>" for p in pmids)
    return ('<?xml version="1.0" encoding="UTF-8"?>\n'
            f"<eSearchResult><Count>{len(pmids)}</Count>"
            f"<RetMax>{len(pmids)}</RetMax><RetStart>0</RetStart>"
            f"<IdList>{ids}</IdList></eSearchResult>\n")


def efetch_xml(pmid: str, title: str, abstract: str) -> str:
    return ('<?xml version="1.0" encoding="UTF-8"?>\n'
            "<PubmedArticleSet><PubmedArticle><MedlineCitation>"
            f'<PMID Version="1">{pmid}</PMID><Article>'
            f"<ArticleTitle>{title}</ArticleTitle>"
            f"<Abstract><AbstractText>{abstract}</AbstractText></Abstract>"
            "</Article></MedlineCitation></PubmedArticle></PubmedArticleSet>\n")


def umls_json(term: str) -> str:
    import json
    cui, name, synonyms, related = CONCEPTS[term]
    payload = {
        "term": term, "cui": cui, "name": name, "synonyms": synonyms,
        "related": [
            {"cui": CONCEPTS[r][0], "name": CONCEPTS[r][1], "synonyms": []}
            for r in related if r in CONCEPTS
        ],
    }
    return json.dumps(payload, indent=1, sort_keys=True)


def main() -> int:
    entrez_dir = FIXTURES / "entrez"
    umls_dir = FIXTURES / "umls"
    entrez_dir.mkdir(parents=True, exist_ok=True)
    umls_dir.mkdir(parents=True, exist_ok=True)

    for pmid, title, abstract, _themes in ARTICLES:
        (entrez_dir / f"efetch_{pmid}.xml").write_text(
            efetch_xml(pmid, title, abstract), encoding="utf-8")

    n_search = 0
    for term, (cui, name, _syn, _rel) in CONCEPTS.items():
        theme = THEME_OF_CONCEPT[term]
        for suffix_tag, suffix in TEMPLATE_SUFFIXES.items():
            query = f"{name.lower()} sarcopenia {suffix_tag}"
            pmids = pmids_for(theme, suffix)
            if not pmids:
                continue
            (entrez_dir / f"esearch_{term_slug(query)}.xml").write_text(
                esearch_xml(pmids), encoding="utf-8")
            n_search += 1

    for term in CONCEPTS:
        (umls_dir / f"{term_slug(term)}.json").write_text(
            umls_json(term) + "\n", encoding="utf-8")

    print(f"wrote {len(ARTICLES)} efetch, {n_search} esearch, "
          f"{len(CONCEPTS)} umls fixtures under {FIXTURES}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
