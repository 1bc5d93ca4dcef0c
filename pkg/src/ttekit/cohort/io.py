"""Cohort file formats: a JSONL mirror of PatientRecord and a CSV trio.

CSV layout (all days are signed integers relative to the index date,
UTF-8, '.' decimal separator):

    patients.csv       patient_id,age_at_index,gender,race,followup_end_day,event_flag,event_type
    observations.csv   patient_id,day,feature,value
    comorbidities.csv  patient_id,day,comorbidity

The CSV trio does not carry the optional index_date; the JSONL format is
the lossless round-trip representation.
"""

from __future__ import annotations

import csv
import json
import logging
import os
from pathlib import Path

from ttekit.cohort.records import PatientRecord
from ttekit.errors import DataValidationError

logger = logging.getLogger(__name__)

PATIENTS_HEADER = [
    "patient_id",
    "age_at_index",
    "gender",
    "race",
    "followup_end_day",
    "event_flag",
    "event_type",
]
OBSERVATIONS_HEADER = ["patient_id", "day", "feature", "value"]
COMORBIDITIES_HEADER = ["patient_id", "day", "comorbidity"]


def _record_to_dict(rec: PatientRecord) -> dict:
    return {
        "patient_id": rec.patient_id,
        "index_date": rec.index_date,
        "age_at_index": rec.age_at_index,
        "static_features": rec.static_features,
        "dynamic_observations": [[d, n, v] for d, n, v in rec.dynamic_observations],
        "comorbidity_diagnoses": [[d, n] for d, n in rec.comorbidity_diagnoses],
        "followup_end": rec.followup_end,
        "event_flag": rec.event_flag,
        "event_type": rec.event_type,
    }


def _record_from_dict(d: dict) -> PatientRecord:
    rec = PatientRecord(
        patient_id=str(d["patient_id"]),
        age_at_index=None if d.get("age_at_index") is None else float(d["age_at_index"]),
        static_features={k: float(v) for k, v in d.get("static_features", {}).items()},
        dynamic_observations=[
            (int(day), str(name), float(value))
            for day, name, value in d.get("dynamic_observations", [])
        ],
        comorbidity_diagnoses=[
            (int(day), str(name)) for day, name in d.get("comorbidity_diagnoses", [])
        ],
        followup_end=int(d["followup_end"]),
        event_flag=bool(d["event_flag"]),
        event_type=d.get("event_type"),
        index_date=d.get("index_date"),
    )
    rec.validate()
    return rec


def export_jsonl(records: list[PatientRecord], path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for rec in records:
            fh.write(json.dumps(_record_to_dict(rec), ensure_ascii=False))
            fh.write("\n")


def ingest_jsonl(path) -> list[PatientRecord]:
    records: list[PatientRecord] = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                records.append(_record_from_dict(json.loads(line)))
            except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
                raise DataValidationError(f"{path}: line {lineno}: {exc}") from exc
    return records


def _check_header(path, actual: list[str] | None, expected: list[str]) -> None:
    if actual is None:
        raise DataValidationError(f"{path}: empty file, expected header {','.join(expected)}")
    missing = [c for c in expected if c not in actual]
    if missing:
        raise DataValidationError(f"{path}: missing required column(s) {missing}")


def export_csv(records: list[PatientRecord], directory) -> None:
    """Write patients/observations/comorbidities CSVs into ``directory``."""
    directory = Path(directory)
    os.makedirs(directory, exist_ok=True)
    with open(directory / "patients.csv", "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(PATIENTS_HEADER)
        for rec in records:
            w.writerow(
                [
                    rec.patient_id,
                    "" if rec.age_at_index is None else repr(rec.age_at_index),
                    _static_cell(rec, "gender"),
                    _static_cell(rec, "race"),
                    rec.followup_end,
                    int(rec.event_flag),
                    rec.event_type or "",
                ]
            )
    with open(directory / "observations.csv", "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(OBSERVATIONS_HEADER)
        for rec in records:
            for day, name, value in rec.dynamic_observations:
                w.writerow([rec.patient_id, day, name, repr(value)])
    with open(directory / "comorbidities.csv", "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(COMORBIDITIES_HEADER)
        for rec in records:
            for day, name in rec.comorbidity_diagnoses:
                w.writerow([rec.patient_id, day, name])


def _static_cell(rec: PatientRecord, name: str) -> str:
    if name in rec.static_features:
        return repr(rec.static_features[name])
    return ""


def ingest_csv(directory) -> list[PatientRecord]:
    directory = Path(directory)
    by_id: dict[str, PatientRecord] = {}
    path = directory / "patients.csv"
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        _check_header(path, reader.fieldnames, PATIENTS_HEADER)
        for lineno, row in enumerate(reader, start=2):
            try:
                static: dict[str, float] = {}
                if row["gender"] != "":
                    static["gender"] = float(row["gender"])
                if row["race"] != "":
                    static["race"] = float(row["race"])
                rec = PatientRecord(
                    patient_id=row["patient_id"],
                    age_at_index=float(row["age_at_index"]) if row["age_at_index"] != "" else None,
                    static_features=static,
                    followup_end=int(row["followup_end_day"]),
                    event_flag=bool(int(row["event_flag"])),
                    event_type=row["event_type"] or None,
                )
            except (KeyError, ValueError) as exc:
                raise DataValidationError(f"{path}: line {lineno}: {exc}") from exc
            if rec.patient_id in by_id:
                raise DataValidationError(
                    f"{path}: line {lineno}: duplicate patient_id {rec.patient_id!r}"
                )
            by_id[rec.patient_id] = rec

    path = directory / "observations.csv"
    seen: dict[tuple[str, int, str], int] = {}
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        _check_header(path, reader.fieldnames, OBSERVATIONS_HEADER)
        for lineno, row in enumerate(reader, start=2):
            try:
                pid = row["patient_id"]
                day = int(row["day"])
                name = row["feature"]
                value = float(row["value"])
            except (KeyError, ValueError) as exc:
                raise DataValidationError(f"{path}: line {lineno}: {exc}") from exc
            if pid not in by_id:
                raise DataValidationError(
                    f"{path}: line {lineno}: unknown patient_id {pid!r}"
                )
            key = (pid, day, name)
            if key in seen:
                logger.warning(
                    "%s: line %d: duplicate observation %s; keeping the last",
                    path,
                    lineno,
                    key,
                )
                by_id[pid].dynamic_observations[seen[key]] = (day, name, value)
            else:
                seen[key] = len(by_id[pid].dynamic_observations)
                by_id[pid].dynamic_observations.append((day, name, value))

    path = directory / "comorbidities.csv"
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        _check_header(path, reader.fieldnames, COMORBIDITIES_HEADER)
        for lineno, row in enumerate(reader, start=2):
            try:
                pid = row["patient_id"]
                day = int(row["day"])
                name = row["comorbidity"]
            except (KeyError, ValueError) as exc:
                raise DataValidationError(f"{path}: line {lineno}: {exc}") from exc
            if pid not in by_id:
                raise DataValidationError(
                    f"{path}: line {lineno}: unknown patient_id {pid!r}"
                )
            by_id[pid].comorbidity_diagnoses.append((day, name))

    records = list(by_id.values())
    for rec in records:
        rec.validate()
    return records
