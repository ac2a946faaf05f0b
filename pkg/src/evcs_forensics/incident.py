"""Incident-occurrence predicate over attacked entities and failed mitigators.

An incident exists when at least one entity suffered a cyber-attack
(zeta_i = 1) while at least one mitigating actor failed to control it
(chi_j = 1). Every (entity, mitigator) pair is coupled, so the score is the
full double sum over the cross product, which factorises as
``sum(zeta) * sum(chi)``. Entity and mitigator counts may differ.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Mapping, Sequence

from .domain import EntityRef, MitigatorRef
from .errors import EmptyState, UnknownEntity


def _bits(values: Sequence[int | bool], name: str) -> tuple[int, ...]:
    out = []
    for v in values:
        if v not in (0, 1):  # True/False compare equal to 1/0
            raise ValueError(f"{name} components must be 0 or 1, got {v!r}")
        out.append(int(v))
    return tuple(out)


@dataclass(frozen=True)
class IncidentState:
    zeta: tuple[int, ...]
    chi: tuple[int, ...]
    entity_index: tuple[EntityRef, ...]
    mitigator_index: tuple[MitigatorRef, ...]

    def __post_init__(self):
        object.__setattr__(self, "zeta", _bits(self.zeta, "zeta"))
        object.__setattr__(self, "chi", _bits(self.chi, "chi"))
        object.__setattr__(self, "entity_index", tuple(self.entity_index))
        object.__setattr__(self, "mitigator_index", tuple(self.mitigator_index))
        if len(self.zeta) != len(self.entity_index):
            raise ValueError("zeta and entity_index lengths differ")
        if len(self.chi) != len(self.mitigator_index):
            raise ValueError("chi and mitigator_index lengths differ")
        if len(set(self.entity_index)) != len(self.entity_index):
            raise ValueError("duplicate entity in entity_index")
        if len(set(self.mitigator_index)) != len(self.mitigator_index):
            raise ValueError("duplicate mitigator in mitigator_index")

    @classmethod
    def from_vectors(cls, zeta: Sequence[int], chi: Sequence[int]) -> IncidentState:
        """Build a state with placeholder refs S1..Sn and C1..Cm."""
        return cls(
            tuple(zeta),
            tuple(chi),
            tuple(EntityRef("S", i) for i in range(1, len(zeta) + 1)),
            tuple(MitigatorRef("C", j) for j in range(1, len(chi) + 1)),
        )

    @classmethod
    def from_flags(
        cls,
        attacked: Mapping[EntityRef, bool],
        uncontrolled: Mapping[MitigatorRef, bool],
    ) -> IncidentState:
        return cls(
            tuple(int(bool(v)) for v in attacked.values()),
            tuple(int(bool(v)) for v in uncontrolled.values()),
            tuple(attacked),
            tuple(uncontrolled),
        )

    def to_dict(self) -> dict:
        return {
            "entities": [{"ref": str(e), "attacked": z} for e, z in zip(self.entity_index, self.zeta)],
            "mitigators": [
                {"ref": str(m), "uncontrolled": c} for m, c in zip(self.mitigator_index, self.chi)
            ],
        }

    @classmethod
    def from_dict(cls, data: Mapping) -> IncidentState:
        entities = data.get("entities", [])
        mitigators = data.get("mitigators", [])
        return cls(
            tuple(e["attacked"] for e in entities),
            tuple(m["uncontrolled"] for m in mitigators),
            tuple(EntityRef.parse(e["ref"]) for e in entities),
            tuple(MitigatorRef.parse(m["ref"]) for m in mitigators),
        )


def _check(state: IncidentState) -> None:
    if not state.zeta:
        raise EmptyState("no entities in incident state")
    if not state.chi:
        raise EmptyState("no mitigators in incident state")


def incident_score(state: IncidentState) -> int:
    """Number of (attacked entity, failed mitigator) coincidences."""
    _check(state)
    return sum(state.zeta) * sum(state.chi)


def is_incident(state: IncidentState) -> bool:
    return incident_score(state) >= 1


def set_attack_flag(state: IncidentState, entity: EntityRef, flagged: bool) -> IncidentState:
    try:
        i = state.entity_index.index(entity)
    except ValueError:
        raise UnknownEntity(f"entity {entity} not in incident state") from None
    zeta = list(state.zeta)
    zeta[i] = int(bool(flagged))
    return replace(state, zeta=tuple(zeta))


def set_control_flag(state: IncidentState, mitigator: MitigatorRef, uncontrolled: bool) -> IncidentState:
    try:
        j = state.mitigator_index.index(mitigator)
    except ValueError:
        raise UnknownEntity(f"mitigator {mitigator} not in incident state") from None
    chi = list(state.chi)
    chi[j] = int(bool(uncontrolled))
    return replace(state, chi=tuple(chi))
