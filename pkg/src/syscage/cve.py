"""CVE<->syscall dataset ingestion and mitigation reporting.

A profile mitigates a CVE when at least one syscall the CVE depends on is
blocked.  The shipped seed dataset pads rows whose CVE ids are not public
in our source with placeholder ids marked synthetic=true, so per-syscall
counts stay faithful without inventing provenance.
"""

from __future__ import annotations

import re
from dataclasses import dataclass

from .errors import MalformedCveId, UnknownSyscall

CVE_ID_RE = re.compile(r"^CVE-\d{4}-\d{4,}$")


@dataclass
class CveRecord:
    id: str
    syscalls: set[str]
    note: str = ""


def load_cve_dataset(
    text: str, table_names: set[str] | None = None, strict: bool = False
) -> list[CveRecord]:
    """Lines: `<CVE-id>\\t<syscall[,syscall...]>\\t[note]`; duplicate ids are
    merged with their syscall sets unioned."""
    by_id: dict[str, CveRecord] = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        fields = stripped.split("\t")
        cve_id = fields[0].strip()
        if not CVE_ID_RE.match(cve_id):
            raise MalformedCveId(f"line {lineno}: {cve_id!r}")
        if len(fields) < 2 or not fields[1].strip():
            raise MalformedCveId(f"line {lineno}: missing syscall list")
        syscalls = {s.strip() for s in fields[1].split(",") if s.strip()}
        if strict and table_names is not None:
            unknown = sorted(syscalls - table_names)
            if unknown:
                raise UnknownSyscall(f"line {lineno}: {', '.join(unknown)}")
        note = fields[2].strip() if len(fields) > 2 else ""
        if cve_id in by_id:
            by_id[cve_id].syscalls |= syscalls
            if note and not by_id[cve_id].note:
                by_id[cve_id].note = note
        else:
            by_id[cve_id] = CveRecord(id=cve_id, syscalls=syscalls, note=note)
    return list(by_id.values())


def mitigation_report(
    records: list[CveRecord], blocked: set[str]
) -> tuple[set[str], dict[str, int]]:
    """Mitigated CVE ids (any dependent syscall blocked) and, per blocked
    syscall, the number of CVEs depending on it."""
    mitigated = {r.id for r in records if r.syscalls & blocked}
    per_syscall = {
        s: sum(1 for r in records if s in r.syscalls)
        for s in sorted(blocked)
        if any(s in r.syscalls for r in records)
    }
    return mitigated, per_syscall


def report_document(records: list[CveRecord], blocked: set[str]) -> dict:
    mitigated, per_syscall = mitigation_report(records, blocked)
    return {
        "mitigated_ids": sorted(mitigated),
        "count": len(mitigated),
        "per_syscall": per_syscall,
    }
