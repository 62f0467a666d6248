"""Source-level facts and two-layer indirect-call resolution.

Facts arrive as a JSON document produced from compiler dumps: address-taken
functions, indirect callsites with parameter types, function signatures, and
alias names.  Candidate targets for an indirect callsite are the
address-taken functions whose recorded signature matches the callsite's
parameter types token-for-token.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

from .errors import AliasCycle, DuplicateSignature, MalformedRecord

VARIADIC = "..."


def canonical_type(token: str) -> str:
    return " ".join(token.split())


@dataclass(frozen=True)
class IndirectSite:
    site_id: str
    caller: str
    param_types: tuple[str, ...]


@dataclass
class SourceFacts:
    address_taken: set[str] = field(default_factory=set)
    indirect_sites: list[IndirectSite] = field(default_factory=list)
    signatures: dict[str, tuple[str, ...]] = field(default_factory=dict)
    aliases: dict[str, str] = field(default_factory=dict)

    def canonical(self, name: str) -> str:
        return self.aliases.get(name, name)


def _close_aliases(pairs: list[dict]) -> dict[str, str]:
    raw: dict[str, str] = {}
    for rec in pairs:
        raw[rec["alias"]] = rec["canonical"]
    closed: dict[str, str] = {}
    for alias in raw:
        seen = [alias]
        cur = alias
        while cur in raw:
            cur = raw[cur]
            if cur in seen:
                raise AliasCycle(" -> ".join(seen + [cur]))
            seen.append(cur)
        closed[alias] = cur
    return closed


def load_source_facts(text: str) -> SourceFacts:
    """Load and normalize a facts document: aliases transitively closed,
    names canonicalized, duplicates deduplicated."""
    try:
        doc = json.loads(text) if text.strip() else {}
    except json.JSONDecodeError as exc:
        raise MalformedRecord(f"facts document is not valid JSON: {exc}") from exc
    if not isinstance(doc, dict):
        raise MalformedRecord("facts document must be a JSON object")

    try:
        aliases = _close_aliases(doc.get("aliases", []))
        facts = SourceFacts(aliases=aliases)
        canon = facts.canonical
        for name in doc.get("address_taken", []):
            facts.address_taken.add(canon(name))
        for rec in doc.get("signatures", []):
            fn = canon(rec["function"])
            params = tuple(canonical_type(t) for t in rec["param_types"])
            if fn in facts.signatures and facts.signatures[fn] != params:
                raise DuplicateSignature(fn)
            facts.signatures[fn] = params
        for rec in doc.get("indirect_sites", []):
            facts.indirect_sites.append(
                IndirectSite(
                    site_id=rec["site_id"],
                    caller=canon(rec["caller"]),
                    param_types=tuple(canonical_type(t) for t in rec["param_types"]),
                )
            )
    except (KeyError, TypeError, AttributeError) as exc:
        raise MalformedRecord(f"malformed facts record: {exc!r}") from exc
    return facts


def signature_matches(signature: tuple[str, ...], params: tuple[str, ...]) -> bool:
    """Token-equality match; a terminal "..." makes the signature variadic:
    the fixed prefix must match and the callsite arity must cover it."""
    if signature and signature[-1] == VARIADIC:
        fixed = signature[:-1]
        return len(params) >= len(fixed) and params[: len(fixed)] == fixed
    return signature == params


def resolve_indirect_targets(site: IndirectSite, facts: SourceFacts) -> set[str]:
    """Address-taken functions whose signature matches the callsite.

    Functions without a recorded signature are never candidates.
    """
    return {
        fn
        for fn in facts.address_taken
        if fn in facts.signatures
        and signature_matches(facts.signatures[fn], site.param_types)
    }
