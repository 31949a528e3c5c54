#!/usr/bin/env python3
"""Writes the five-patient end-to-end bundle (P0201-P0205), the scripted
scenario that drives every model stage, and a pipeline config."""
import csv
import json
import pathlib

HERE = pathlib.Path(__file__).parent
BUNDLE = HERE / "bundle"

PATIENTS = {
    "P0201": {
        "diagnoses": [("J18.9", "Pneumonia"), ("I10", "Hypertension")],
        "meds": [("Azithromycin", "500 mg", "PO", "daily"), ("Lisinopril", "10 mg", "PO", "daily")],
        "labs": [("2150-03-02 08:00:00", "WBC", "14.2", "K/uL")],
        "triage": (100.9, 96, 20, 94, 132, 80, 3, 3, "Cough"),
        "course": "The patient presented with cough and fever. She was diagnosed with pneumonia. "
                  "She was started on azithromycin. Her home lisinopril was continued. "
                  "She was discharged in stable condition.",
        "note": "Chief Complaint: Cough\n\nPatient with productive cough and fever. Chest film consistent with "
                "PNA. Treated with azithromycin.",
    },
    "P0202": {
        "diagnoses": [("E11.9", "Type 2 diabetes mellitus")],
        "meds": [("Metformin", "500 mg", "PO", "twice daily")],
        "labs": [("2150-04-11 07:30:00", "Glucose", "110", "mg/dL"), ("2150-04-11 07:30:00", "Sodium", "139", "mEq/L")],
        "triage": (98.2, 78, 16, 98, 126, 74, 0, 3, "Dizziness"),
        "course": "The patient was admitted for dizziness. Labs showed a glucose of 110. "
                  "Her symptoms resolved with hydration. She was discharged home.",
        "note": "Chief Complaint: Dizziness\n\nPatient with diabetes presenting with dizziness. Glucose normal.",
    },
    "P0203": {
        "diagnoses": [("I10", "Hypertension")],
        "meds": [("Lisinopril", "20 mg", "PO", "daily")],
        "labs": [("2150-05-20 09:15:00", "Creatinine", "0.9", "mg/dL")],
        "triage": (98.6, 72, 14, 99, 128, 76, 2, 3, "Headache"),
        "course": "The patient presented with headache. Blood pressure was 128/76. "
                  "Her lisinopril dose was unchanged. She was discharged home.",
        "note": "Chief Complaint: Headache\n\nHeadache without focal deficits. Blood pressure controlled.",
    },
    "P0204": {
        "diagnoses": [("N39.0", "Urinary tract infection")],
        "meds": [("Nitrofurantoin", "100 mg", "PO", "twice daily")],
        "labs": [("2150-06-03 10:00:00", "WBC", "9.1", "K/uL")],
        "triage": (98.4, 84, 16, 98, 118, 70, 4, 3, "Dysuria"),
        "course": "The patient presented with dysuria. No fever during the hospital stay. "
                  "She was treated with nitrofurantoin. She was discharged home.",
        "note": "Chief Complaint: Dysuria\n\nNo fever during the stay. Urinalysis consistent with infection.",
    },
    "P0205": {
        "diagnoses": [("N17.9", "Acute kidney injury")],
        "meds": [("Sodium chloride 0.9%", "1000 mL", "IV", "once")],
        "labs": [("2150-07-08 06:45:00", "Creatinine", "2.1", "mg/dL"), ("2150-07-10 06:45:00", "Creatinine", "1.2", "mg/dL")],
        "triage": (98.1, 88, 18, 97, 104, 62, 1, 3, "Weakness"),
        "course": "The patient presented with weakness. He received intravenous fluids. "
                  "Discharged home on hospital day 3.",
        "note": "Chief Complaint: Weakness\n\nAKI, prerenal. Improved with fluids. Discharged on hospital day 3.",
    },
}


def write(name, header, rows):
    with (BUNDLE / name).open("w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


def build_bundle():
    BUNDLE.mkdir(exist_ok=True)
    diag, dis, tgt, ed, rad, tri, med, lab = ([] for _ in range(8))
    for pid, p in PATIENTS.items():
        n = int(pid[1:])
        stay, hadm = f"3100{n:04d}", f"2100{n:04d}"
        date = p["labs"][0][0][:10]
        for seq, (code, title) in enumerate(p["diagnoses"], 1):
            diag.append([pid, stay, seq, code, 10, title])
        dis.append([f"{pid}-DS-1", pid, hadm, p["note"]])
        tgt.append([f"{pid}-DS-1", pid, hadm, p["course"], "Follow up with your primary care physician."])
        ed.append([pid, hadm, stay, f"{date} 05:00:00", f"{date} 11:00:00", "HOME"])
        t, hr, rr, o2, sbp, dbp, pain, acuity, cc = p["triage"]
        tri.append([pid, stay, t, hr, rr, o2, sbp, dbp, pain, acuity, cc])
        for drug, dose, route, freq in p["meds"]:
            med.append([pid, drug, dose, route, freq])
        for when, test, value, unit in p["labs"]:
            lab.append([pid, when, test, value, unit])
    write("diagnosis.csv", ["subject_id", "stay_id", "seq_num", "icd_code", "icd_version", "icd_title"], diag)
    write("discharge.csv", ["note_id", "subject_id", "hadm_id", "text"], dis)
    write("discharge_target.csv",
          ["note_id", "subject_id", "hadm_id", "brief_hospital_course", "discharge_instructions"], tgt)
    write("edstays.csv", ["subject_id", "hadm_id", "stay_id", "intime", "outtime", "disposition"], ed)
    write("radiology.csv", ["note_id", "subject_id", "hadm_id", "text"], rad)
    write("triage.csv", ["subject_id", "stay_id", "temperature", "heartrate", "resprate", "o2sat", "sbp", "dbp",
                         "pain", "acuity", "chiefcomplaint"], tri)
    write("medications.csv", ["subject_id", "drug", "dose", "route", "frequency"], med)
    write("labs.csv", ["subject_id", "charttime", "test", "value", "unit"], lab)


# (patient, original sentence, type, rewrite, explanation, cited entity, reasoning)
INJECTIONS = [
    ("P0201", "She was diagnosed with pneumonia.", "diagnosis_error", "She was diagnosed with tuberculosis.",
     "Pneumonia replaced with tuberculosis.", "DIAGNOSIS|Pneumonia",
     "The sentence names tuberculosis, but the record diagnosis is J18.9 Pneumonia {cite}; "
     "there is no tuberculosis diagnosis."),
    ("P0201", "She was started on azithromycin.", "medication_error", "She was started on clarithromycin.",
     "Azithromycin replaced with clarithromycin.", "MEDICATION|Azithromycin",
     "The sentence names clarithromycin, but the prescribed antibiotic is azithromycin {cite}."),
    ("P0202", "Labs showed a glucose of 110.", "exam_result_error", "Labs showed a glucose of 310.",
     "Glucose value changed from 110 to 310.", "LAB_RESULT|Metabolic panel @ 2150-04-11 07:30:00",
     "The sentence reports glucose 310, but the measured glucose was 110 mg/dL {cite}."),
    ("P0203", "Blood pressure was 128/76.", "value_error", "Blood pressure was 182/76.",
     "Systolic pressure changed from 128 to 182.", "VITAL_SIGN|Blood pressure",
     "The sentence reports 182/76, but the recorded blood pressure was 128/76 mmHg {cite}."),
    ("P0204", "No fever during the hospital stay.", "negation_error", "Fever was present during the hospital stay.",
     "Absence of fever flipped to presence.", "VITAL_SIGN|Temperature",
     "The sentence claims fever, but the recorded temperature was 98.4 F {cite} and the patient was afebrile."),
    ("P0205", "Discharged home on hospital day 3.", "time_error", "Discharged home on hospital day 6.",
     "Discharge day changed from 3 to 6.", "DEPARTMENT|Emergency Department",
     "The sentence says hospital day 6, but the stay record {cite} and the notes give hospital day 3."),
]


def build_scenario():
    matchers = []
    # P0201's note mentions "PNA": extraction returns it so normalization has work to do.
    matchers.append({"stage": "extract", "patient_id": "P0201", "contains": ["SOURCE: discharge"], "sticky": True,
                     "responses": [{"entities": [{"type": "DIAGNOSIS", "name": "PNA", "attributes": {}}],
                                    "relations": [{"src": "Patient", "src_type": "PATIENT", "dst": "PNA",
                                                   "dst_type": "DIAGNOSIS", "type": "has_diagnosis"}]}]})
    matchers.append({"stage": "extract", "sticky": True, "responses": [{"entities": [], "relations": []}]})
    for pid, sentence, *_ in INJECTIONS:
        matchers.append({"stage": "applicability", "patient_id": pid, "contains": [f"SENTENCE: {sentence}"],
                         "sticky": True,
                         "responses": [{"has_verifiable_fact": True, "plausibly_rewritable": True,
                                        "moderate_complexity": True, "rationale": "single checkable fact"}]})
    matchers.append({"stage": "applicability", "sticky": True,
                     "responses": [{"has_verifiable_fact": False, "plausibly_rewritable": False,
                                    "moderate_complexity": True, "rationale": "nothing specific to change"}]})
    for pid, sentence, htype, rewrite, explanation, _, _ in INJECTIONS:
        matchers.append({"stage": "generate", "patient_id": pid,
                         "contains": [f"ERROR_TYPE: {htype}", f"SENTENCE: {sentence}"], "sticky": True,
                         "responses": [{"hallucinated_text": rewrite, "hallucination_type": htype,
                                        "explanation": explanation}]})
    for pid, _, htype, rewrite, _, cited, reasoning in INJECTIONS:
        cite = "[ent:{{entity:" + cited + "}}]"
        matchers.append({"stage": "detect", "patient_id": pid, "contains": [f"SENTENCE: {rewrite}"], "sticky": True,
                         "responses": [{"reasoning": reasoning.format(cite=cite), "hallucination_status": True,
                                        "hallucination_type": [htype], "conflict": 1, "support": 0.0, "explicit": 1,
                                        "evidence_grade": "E4"}]})
    matchers.append({"stage": "detect", "sticky": True,
                     "responses": [{"reasoning": "The evidence states this directly.", "hallucination_status": False,
                                    "hallucination_type": [], "conflict": 0, "support": 0.9, "explicit": 1,
                                    "evidence_grade": "E1"}]})
    scenario = {"name": "e2e", "strict": True, "matchers": matchers}
    (HERE / "scenario.json").write_text(json.dumps(scenario, indent=2) + "\n")


def build_config():
    cfg = {
        "data_root": "bundle",
        "out_dir": "/tmp/faithcheck-e2e",
        "ratio": 1.0,
        "backend": {"kind": "scripted", "scenario": "scenario.json"},
        "evaluate_partitions": ["test"],
    }
    (HERE / "pipeline.json").write_text(json.dumps(cfg, indent=2) + "\n")


if __name__ == "__main__":
    build_bundle()
    build_scenario()
    build_config()
    print("wrote", BUNDLE, HERE / "scenario.json", HERE / "pipeline.json")
