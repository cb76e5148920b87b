"""JSON documents for instances and schedules (schema version "v1").

Emission is canonical: parsing an emitted document and emitting it again
gives identical bytes.
"""

from __future__ import annotations

import json
from fractions import Fraction
from typing import Any

from .model import JOB_MACHINE, UMPS, Instance, Job, Machine, ModelError, Schedule

VERSION = "v1"


def fmt_time(t: Fraction) -> str:
    t = Fraction(t)
    return f"{t.numerator}/{t.denominator}"


def parse_time(text: str | int) -> Fraction:
    try:
        return Fraction(text)
    except (ValueError, ZeroDivisionError, TypeError) as exc:
        raise ModelError(f"bad time value {text!r}") from exc


def instance_to_dict(inst: Instance) -> dict[str, Any]:
    doc: dict[str, Any] = {
        "version": VERSION,
        "model": inst.model,
        "jobs": [{"id": j.id, "in_delay": j.in_delay, "out_delay": j.out_delay} for j in inst.jobs],
        "machines": [
            {"id": m.id, "size": m.size, "speed": m.speed, "in_delay": m.in_delay, "out_delay": m.out_delay}
            for m in inst.machines
        ],
        "edges": [[u, v] for u, v in inst.edges],
    }
    if inst.model == JOB_MACHINE:
        doc["table"] = {str(j): {str(i): inst.table[j][i] for i in sorted(inst.table[j])} for j in sorted(inst.table)}
    if inst.model == UMPS:
        doc["partition"] = {str(i): list(inst.partition[i]) for i in sorted(inst.partition)}
    return doc


def instance_from_dict(doc: dict[str, Any]) -> Instance:
    try:
        if doc.get("version") != VERSION:
            raise ModelError(f"unsupported instance version {doc.get('version')!r}")
        jobs = tuple(Job(int(j["id"]), int(j.get("in_delay", 0)), int(j.get("out_delay", 0))) for j in doc["jobs"])
        machines = tuple(
            Machine(
                int(m["id"]),
                int(m.get("size", 1)),
                int(m.get("speed", 1)),
                int(m.get("in_delay", 0)),
                int(m.get("out_delay", 0)),
            )
            for m in doc["machines"]
        )
        edges = tuple((int(u), int(v)) for u, v in doc.get("edges", []))
        table = None
        if "table" in doc:
            table = {int(j): {int(i): int(d) for i, d in row.items()} for j, row in doc["table"].items()}
        part = None
        if "partition" in doc:
            part = {int(i): tuple(int(j) for j in js) for i, js in doc["partition"].items()}
        return Instance(jobs, machines, edges, doc.get("model", "additive"), table, part)
    except (KeyError, TypeError, ValueError) as exc:
        if isinstance(exc, ModelError):
            raise
        raise ModelError(f"malformed instance document: {exc}") from exc


def schedule_to_dict(s: Schedule) -> dict[str, Any]:
    return {
        "version": VERSION,
        "no_duplication": s.no_duplication,
        "placements": [{"job": j, "machine": m, "start": fmt_time(t)} for j, m, t in sorted(s.triples())],
    }


def schedule_from_dict(doc: dict[str, Any]) -> Schedule:
    try:
        if doc.get("version") != VERSION:
            raise ModelError(f"unsupported schedule version {doc.get('version')!r}")
        triples = [(int(p["job"]), int(p["machine"]), parse_time(p["start"])) for p in doc["placements"]]
        return Schedule.from_triples(triples, bool(doc.get("no_duplication", False)))
    except (KeyError, TypeError, ValueError) as exc:
        if isinstance(exc, ModelError):
            raise
        raise ModelError(f"malformed schedule document: {exc}") from exc


def dumps(doc: Any) -> str:
    return json.dumps(doc, indent=2, sort_keys=False) + "\n"


def dump_instance(inst: Instance) -> str:
    return dumps(instance_to_dict(inst))


def load_instance(text: str) -> Instance:
    try:
        return instance_from_dict(json.loads(text))
    except json.JSONDecodeError as exc:
        raise ModelError(f"invalid JSON: {exc}") from exc


def dump_schedule(s: Schedule) -> str:
    return dumps(schedule_to_dict(s))


def load_schedule(text: str) -> Schedule:
    try:
        return schedule_from_dict(json.loads(text))
    except json.JSONDecodeError as exc:
        raise ModelError(f"invalid JSON: {exc}") from exc


# -------------------------------------------------- pipeline checkpoints


def grouped_to_dict(grouped) -> dict[str, Any]:
    return {
        "version": VERSION,
        "cap": grouped.cap,
        "instance": instance_to_dict(grouped.instance),
        "machine_groups": [
            {"index": g.index, "delay": g.delay, "size": g.size, "speed": g.speed, "members": list(g.members)}
            for g in grouped.machine_groups
        ],
        "job_groups": [{"index": g.index, "delay": g.delay, "members": list(g.members)} for g in grouped.job_groups],
    }


def lp_solution_to_dict(sol) -> dict[str, Any]:
    return {
        "status": sol.status,
        "objective": sol.objective,
        "pivots": sol.pivots,
        "values": {k: v for k, v in sorted(sol.values.items()) if abs(v) > 1e-12},
    }


def rounded_to_dict(rounded) -> dict[str, Any]:
    return {
        "variant": rounded.variant,
        "alpha": fmt_time(rounded.alpha),
        "K": rounded.K,
        "L": rounded.L,
        "cstar": fmt_time(rounded.cstar),
        "lifted": rounded.lifted,
        "C": {str(v): fmt_time(c) for v, c in sorted(rounded.C.items())},
        "assign": {str(v): k for v, k in sorted(rounded.assign.items())},
        "z": [list(t) for t in sorted(rounded.z)],
    }
