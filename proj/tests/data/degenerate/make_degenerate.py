#!/usr/bin/env python3
"""Writes patient P0001's record bundle and a scripted extraction scenario
whose output reproduces a degenerate raw graph: parameter-level lab nodes,
three patient nodes, synonym duplicates and detached fragments.

Expected raw quality: 240 entities, 35 LAB_TEST, 3 PATIENT, 18 duplicates,
7 components. Tables contribute 210 entities, free-text extraction 30.
"""
import csv
import json
import pathlib

HERE = pathlib.Path(__file__).parent
PID, STAY, HADM = "P0001", "31000001", "21000001"

PANELS = {
    "CBC": (["WBC", "RBC", "HGB", "HCT", "PLT", "MCV", "MCH", "MCHC", "RDW"], "K/uL"),
    "Metabolic panel": (["Sodium", "Potassium", "Chloride", "Bicarbonate", "Glucose", "Calcium", "Magnesium",
                         "Phosphate", "Lactate"], "mmol/L"),
    "Liver function panel": (["ALT", "AST", "Bilirubin", "ALP", "Albumin", "GGT"], "U/L"),
    "Renal function panel": (["Creatinine", "BUN", "eGFR"], "mg/dL"),
    "Coagulation panel": (["PT", "INR", "PTT", "Fibrinogen"], "sec"),
    "Cardiac panel": (["Troponin", "CK-MB", "BNP", "CK"], "ng/mL"),
}
# (panel, parameters drawn per time point); 28 draws, 161 parameter rows
DRAWS = [
    ("CBC", [9] * 7),
    ("Metabolic panel", [9] * 6),
    ("Liver function panel", [6] * 4),
    ("Renal function panel", [2] * 5),
    ("Coagulation panel", [2, 2, 2]),
    ("Cardiac panel", [2, 1, 1]),
]
MEDS = [("Azithromycin", "500 mg", "PO", "daily"), ("Ceftriaxone", "1 g", "IV", "daily"),
        ("Metformin", "500 mg", "PO", "twice daily"), ("Lisinopril", "10 mg", "PO", "daily"),
        ("Acetaminophen", "650 mg", "PO", "every 6 hours"), ("Aspirin", "81 mg", "PO", "daily"),
        ("Furosemide", "20 mg", "IV", "once")]

DISCHARGE = (
    "Chief Complaint: Cough\n\n"
    "History of Present Illness: The patient is a 67 year old woman with T2DM (also documented as type 2 "
    "diabetes, DM2) and HTN (high blood pressure) who presented to the ED with cough and fever. Found to have "
    "PNA; AKI on admission with anemia. Temp 101.2, HR 104, RR 22, O2 sat 93%, BP 138/84, pulse regular. "
    "eGFR, PTT, fibrinogen, BNP and CK were sent. ECG unremarkable. Treated with Zithromax. Seen in the ER "
    "previously for pneumonia.\n"
)
RADIOLOGY = "CHEST X-RAY. FINDINGS: Right lower lobe opacity concerning for lung infection."


def rows_labs():
    rows = []
    for panel, sizes in DRAWS:
        params, unit = PANELS[panel]
        for day, size in enumerate(sizes):
            when = f"2180-03-{day + 1:02d} 06:00:00"
            for i, p in enumerate(params[:size]):
                rows.append([PID, when, p, f"{(day + 1) * 1.5 + i:.1f}", unit])
    return rows


def write(name, header, rows):
    with (HERE / name).open("w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


def entity(etype, name):
    return {"type": etype, "name": name, "attributes": {}}


def link(src, src_type, dst, dst_type, rtype):
    return {"src": src, "src_type": src_type, "dst": dst, "dst_type": dst_type, "type": rtype}


def discharge_extraction():
    pat = "The patient"
    ents = [entity("PATIENT", pat)]
    rels = []

    def attach(etype, name, rtype):
        ents.append(entity(etype, name))
        rels.append(link(pat, "PATIENT", name, etype, rtype))

    for name in ["Acute kidney injury", "Anemia"]:
        attach("DIAGNOSIS", name, "has_diagnosis")
    attach("SYMPTOM", "Fever", "shows")
    for name in ["eGFR", "PTT", "Fibrinogen", "BNP", "CK"]:
        attach("LAB_TEST", name, "tested_by")
    for name in ["PNA", "T2DM", "type 2 diabetes", "HTN", "high blood pressure", "AKI", "pneumonia"]:
        attach("DIAGNOSIS", name, "has_diagnosis")
    for name in ["temp", "HR", "RR", "O2 sat", "BP"]:
        attach("VITAL_SIGN", name, "has_vital_sign")
    attach("DEPARTMENT", "ED", "treated_in")
    attach("PROCEDURE", "ECG", "underwent")
    # mentioned without any relation: detached fragments
    ents += [entity("MEDICATION", "Zithromax"), entity("DEPARTMENT", "ER"), entity("VITAL_SIGN", "pulse"),
             entity("DIAGNOSIS", "DM2")]
    # a relation to an undeclared endpoint is dropped by the extractor
    rels.append(link(pat, "PATIENT", "Sepsis", "DIAGNOSIS", "has_diagnosis"))
    assert len(ents) == 27
    return {"entities": ents, "relations": rels}


def radiology_extraction():
    ents = [entity("PATIENT", "Pt"), entity("PROCEDURE", "Chest X-ray"), entity("DIAGNOSIS", "lung infection")]
    rels = [link("Pt", "PATIENT", "Chest X-ray", "PROCEDURE", "underwent"),
            link("Pt", "PATIENT", "lung infection", "DIAGNOSIS", "has_diagnosis")]
    return {"entities": ents, "relations": rels}


def main():
    write("diagnosis.csv", ["subject_id", "stay_id", "seq_num", "icd_code", "icd_version", "icd_title"],
          [[PID, STAY, 1, "J18.9", 10, "Pneumonia"], [PID, STAY, 2, "E11.9", 10, "Type 2 diabetes mellitus"],
           [PID, STAY, 3, "I10", 10, "Hypertension"]])
    write("discharge.csv", ["note_id", "subject_id", "hadm_id", "text"], [[f"{PID}-DS-1", PID, HADM, DISCHARGE]])
    write("discharge_target.csv",
          ["note_id", "subject_id", "hadm_id", "brief_hospital_course", "discharge_instructions"],
          [[f"{PID}-DS-1", PID, HADM,
            "The patient presented with cough and fever. She was diagnosed with pneumonia. "
            "She was started on azithromycin 500 mg daily. Discharged home on hospital day 4.",
            "Complete the antibiotic course."]])
    write("edstays.csv", ["subject_id", "hadm_id", "stay_id", "intime", "outtime", "disposition"],
          [[PID, HADM, STAY, "2180-03-01 02:00:00", "2180-03-01 09:00:00", "HOME"]])
    write("radiology.csv", ["note_id", "subject_id", "hadm_id", "text"], [[f"{PID}-RR-1", PID, HADM, RADIOLOGY]])
    write("triage.csv", ["subject_id", "stay_id", "temperature", "heartrate", "resprate", "o2sat", "sbp", "dbp",
                         "pain", "acuity", "chiefcomplaint"],
          [[PID, STAY, 101.2, 104, 22, 93, 138, 84, 3, 2, "Cough"]])
    write("medications.csv", ["subject_id", "drug", "dose", "route", "frequency"], [[PID, *m] for m in MEDS])
    labs = rows_labs()
    assert len(labs) == 161
    write("labs.csv", ["subject_id", "charttime", "test", "value", "unit"], labs)

    scenario = {
        "name": "degenerate-extraction",
        "strict": True,
        "matchers": [
            {"stage": "extract", "patient_id": PID, "contains": ["SOURCE: discharge"],
             "responses": [discharge_extraction()]},
            {"stage": "extract", "patient_id": PID, "contains": ["SOURCE: radiology#0"],
             "responses": [radiology_extraction()]},
        ],
    }
    (HERE / "scenario.json").write_text(json.dumps(scenario, indent=2) + "\n")
    print("wrote bundle and scenario to", HERE)


if __name__ == "__main__":
    main()
