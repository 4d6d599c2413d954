"""Node identifier registry for the radio side.

UEs get NR identifiers handed out sequentially from 2049. Identifiers in
1025..2048 belong to the LTE range and are never valid binding targets.
"""

from __future__ import annotations

LTE_ID_MIN = 1025
NR_ID_MIN = 2049


class BindingError(ValueError):
    pass


class IdRangeError(BindingError):
    pass


class NodeRegistry:
    def __init__(self):
        self._by_name: dict[str, int] = {}
        self._next = NR_ID_MIN

    def add_ue(self, name: str) -> int:
        if name in self._by_name:
            raise BindingError(f"UE {name!r} already registered")
        ue_id = self._next
        self._next += 1
        self._by_name[name] = ue_id
        return ue_id

    def resolve(self, ue: str | int) -> int:
        if isinstance(ue, int):
            if ue < NR_ID_MIN:
                kind = "LTE" if ue >= LTE_ID_MIN else "reserved"
                raise IdRangeError(f"UE id {ue} is in the {kind} range; NR ids start at {NR_ID_MIN}")
            if ue not in self._by_name.values():
                raise BindingError(f"no UE registered with id {ue}")
            return ue
        try:
            return self._by_name[ue]
        except KeyError:
            raise BindingError(f"unknown UE {ue!r}") from None

    def name_of(self, ue_id: int) -> str:
        for name, i in self._by_name.items():
            if i == ue_id:
                return name
        raise BindingError(f"no UE registered with id {ue_id}")

    @property
    def ue_ids(self) -> list[int]:
        return sorted(self._by_name.values())

    def __len__(self) -> int:
        return len(self._by_name)
