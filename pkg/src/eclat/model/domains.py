"""Finite value domains for aggregate fields and operation parameters.

Runtime value representation (chosen so states compare and hash cheaply):

* ``int`` / ``bool`` / enumeration scalars are plain Python values;
* set fields are ``frozenset``;
* map fields are a tuple of ``(key, value)`` pairs sorted by key, with
  set-valued entries stored as non-empty ``frozenset``.
"""

from __future__ import annotations

import itertools
import random
from collections.abc import Iterable, Iterator, Mapping
from dataclasses import dataclass, field
from typing import Any

from eclat.canonical import scalar_key
from eclat.errors import DomainError, NotALattice

MAX_COLLECTION = 8

Value = Any


def _check_scalar(v: Any, what: str) -> None:
    if not isinstance(v, (str, int, bool)) or v is None:
        raise DomainError(f"{what} must be a string, integer or boolean, got {v!r}")


class Domain:
    kind: str = ""

    def size(self) -> int:
        raise NotImplementedError

    def values(self) -> Iterator[Value]:
        raise NotImplementedError

    def contains(self, v: Value) -> bool:
        raise NotImplementedError

    def coerce(self, raw: Any) -> Value:
        """Convert a JSON value into the runtime representation."""
        return raw

    def to_json(self, v: Value) -> Any:
        return v

    def spec(self) -> dict:
        raise NotImplementedError

    def sample(self, rng: random.Random) -> Value:
        raise NotImplementedError

    def is_collection(self) -> bool:
        return False


@dataclass(frozen=True)
class IntRange(Domain):
    lo: int
    hi: int
    kind = "int"

    def __post_init__(self):
        if self.lo > self.hi:
            raise DomainError(f"empty integer range [{self.lo}..{self.hi}]")

    def size(self) -> int:
        return self.hi - self.lo + 1

    def values(self) -> Iterator[int]:
        return iter(range(self.lo, self.hi + 1))

    def contains(self, v: Value) -> bool:
        return isinstance(v, int) and not isinstance(v, bool) and self.lo <= v <= self.hi

    def coerce(self, raw: Any) -> int:
        if not isinstance(raw, int) or isinstance(raw, bool):
            raise DomainError(f"expected integer, got {raw!r}")
        if not self.lo <= raw <= self.hi:
            raise DomainError(f"{raw} is outside [{self.lo}..{self.hi}]")
        return raw

    def spec(self) -> dict:
        return {"kind": "int", "min": self.lo, "max": self.hi}

    def sample(self, rng: random.Random) -> int:
        return rng.randint(self.lo, self.hi)

    def leq(self, a: int, b: int) -> bool:
        return a <= b

    def join(self, a: int, b: int) -> int:
        return max(a, b)


@dataclass(frozen=True)
class BoolDomain(Domain):
    kind = "bool"

    def size(self) -> int:
        return 2

    def values(self) -> Iterator[bool]:
        return iter((False, True))

    def contains(self, v: Value) -> bool:
        return isinstance(v, bool)

    def coerce(self, raw: Any) -> bool:
        if not isinstance(raw, bool):
            raise DomainError(f"expected boolean, got {raw!r}")
        return raw

    def spec(self) -> dict:
        return {"kind": "bool"}

    def sample(self, rng: random.Random) -> bool:
        return rng.random() < 0.5

    def leq(self, a: bool, b: bool) -> bool:
        return a <= b

    def join(self, a: bool, b: bool) -> bool:
        return a or b


@dataclass(frozen=True)
class EnumDomain(Domain):
    """Enumeration, optionally ordered as a join-semilattice.

    ``order`` lists ``[lower, upper]`` pairs; the reflexive-transitive closure
    must be a partial order in which every pair of values has a least upper
    bound.
    """

    members: tuple
    order: tuple[tuple[Any, Any], ...] | None = None
    _leq: frozenset = field(default=frozenset(), compare=False, repr=False)
    _join: Mapping = field(default_factory=dict, compare=False, repr=False)
    kind = "enum"

    def __post_init__(self):
        if not self.members:
            raise DomainError("enumeration has no values")
        for m in self.members:
            _check_scalar(m, "enumeration value")
        if len(set(self.members)) != len(self.members):
            raise DomainError(f"duplicate enumeration values in {list(self.members)}")
        if self.order is not None:
            leq, join = _semilattice(self.members, self.order)
            object.__setattr__(self, "_leq", leq)
            object.__setattr__(self, "_join", join)

    @property
    def is_lattice(self) -> bool:
        return self.order is not None

    def size(self) -> int:
        return len(self.members)

    def values(self) -> Iterator[Any]:
        return iter(self.members)

    def contains(self, v: Value) -> bool:
        return v in self.members and type(v) in {type(m) for m in self.members}

    def coerce(self, raw: Any) -> Any:
        if not self.contains(raw):
            raise DomainError(f"{raw!r} is not one of {list(self.members)}")
        return raw

    def spec(self) -> dict:
        out: dict = {"kind": "enum", "values": list(self.members)}
        if self.order is not None:
            out["order"] = [list(p) for p in self.order]
        return out

    def sample(self, rng: random.Random) -> Any:
        return rng.choice(self.members)

    def leq(self, a: Any, b: Any) -> bool:
        if self.order is None:
            raise DomainError("enumeration declares no order")
        return (a, b) in self._leq

    def join(self, a: Any, b: Any) -> Any:
        if self.order is None:
            raise DomainError("enumeration declares no order")
        return self._join[(a, b)]


def _semilattice(members: tuple, order: Iterable) -> tuple[frozenset, dict]:
    idx = {m: i for i, m in enumerate(members)}
    n = len(members)
    rel = [[i == j for j in range(n)] for i in range(n)]
    for pair in order:
        lo, hi = pair
        if lo not in idx or hi not in idx:
            raise NotALattice(f"order pair {[lo, hi]} names an unknown value")
        rel[idx[lo]][idx[hi]] = True
    for k in range(n):
        for i in range(n):
            if rel[i][k]:
                for j in range(n):
                    if rel[k][j]:
                        rel[i][j] = True
    for i in range(n):
        for j in range(i + 1, n):
            if rel[i][j] and rel[j][i]:
                raise NotALattice(f"order has a cycle through {members[i]!r} and {members[j]!r}")
    join: dict = {}
    for i in range(n):
        for j in range(n):
            ubs = [k for k in range(n) if rel[i][k] and rel[j][k]]
            least = [u for u in ubs if all(rel[u][w] for w in ubs)]
            if len(least) != 1:
                raise NotALattice(
                    f"{members[i]!r} and {members[j]!r} have no least upper bound")
            join[(members[i], members[j])] = members[least[0]]
    leq = frozenset((members[i], members[j]) for i in range(n) for j in range(n) if rel[i][j])
    return leq, join


@dataclass(frozen=True)
class SetDomain(Domain):
    """Subsets of a small enumeration."""

    elements: tuple
    kind = "set"

    def __post_init__(self):
        for e in self.elements:
            _check_scalar(e, "set element")
        if len(set(self.elements)) != len(self.elements):
            raise DomainError("duplicate set elements")
        if len(self.elements) > MAX_COLLECTION:
            raise DomainError(
                f"set over {len(self.elements)} elements exceeds the {MAX_COLLECTION}-element cap")

    def size(self) -> int:
        return 2 ** len(self.elements)

    def values(self) -> Iterator[frozenset]:
        for r in range(len(self.elements) + 1):
            for combo in itertools.combinations(self.elements, r):
                yield frozenset(combo)

    def contains(self, v: Value) -> bool:
        return isinstance(v, frozenset) and v <= frozenset(self.elements)

    def coerce(self, raw: Any) -> frozenset:
        if not isinstance(raw, list):
            raise DomainError(f"expected a list for a set value, got {raw!r}")
        v = frozenset(raw)
        if len(v) != len(raw) or not self.contains(v):
            raise DomainError(f"{raw!r} is not a subset of {list(self.elements)}")
        return v

    def to_json(self, v: frozenset) -> list:
        return sorted(v, key=scalar_key)

    def spec(self) -> dict:
        return {"kind": "set", "elements": list(self.elements)}

    def sample(self, rng: random.Random) -> frozenset:
        return frozenset(e for e in self.elements if rng.random() < 0.5)

    def is_collection(self) -> bool:
        return True


@dataclass(frozen=True)
class MapDomain(Domain):
    """Partial map from enumerated keys to a scalar or set domain.

    Absent keys are simply missing from the pair tuple. Set-valued entries are
    never empty (an emptied entry is removed). ``tombstone`` names the value
    that marks a deleted key; inserts never overwrite it.
    """

    keys: tuple
    value_domain: Domain
    tombstone: Any = None
    kind = "map"

    def __post_init__(self):
        for k in self.keys:
            if not isinstance(k, str):
                raise DomainError(f"map keys must be strings, got {k!r}")
        if len(set(self.keys)) != len(self.keys):
            raise DomainError("duplicate map keys")
        if len(self.keys) > MAX_COLLECTION:
            raise DomainError(
                f"map over {len(self.keys)} keys exceeds the {MAX_COLLECTION}-key cap")
        if isinstance(self.value_domain, MapDomain):
            raise DomainError("nested maps are not supported")
        if self.tombstone is not None:
            if self.set_valued or not self.value_domain.contains(self.tombstone):
                raise DomainError(f"tombstone {self.tombstone!r} is not a scalar map value")

    @property
    def set_valued(self) -> bool:
        return isinstance(self.value_domain, SetDomain)

    def _entry_values(self) -> list:
        vals = list(self.value_domain.values())
        if self.set_valued:
            vals = [v for v in vals if v]
        return vals

    def size(self) -> int:
        per_key = self.value_domain.size() - (1 if self.set_valued else 0) + 1
        return per_key ** len(self.keys)

    def values(self) -> Iterator[tuple]:
        options = [None] + self._entry_values()
        for combo in itertools.product(options, repeat=len(self.keys)):
            yield tuple(sorted(((k, v) for k, v in zip(self.keys, combo) if v is not None),
                               key=lambda kv: kv[0]))

    def contains(self, v: Value) -> bool:
        if not isinstance(v, tuple):
            return False
        ks = [k for k, _ in v]
        if ks != sorted(set(ks)) or not set(ks) <= set(self.keys):
            return False
        for _, val in v:
            if not self.value_domain.contains(val) or (self.set_valued and not val):
                return False
        return True

    def coerce(self, raw: Any) -> tuple:
        if not isinstance(raw, dict):
            raise DomainError(f"expected an object for a map value, got {raw!r}")
        out = []
        for k in sorted(raw):
            if k not in self.keys:
                raise DomainError(f"unknown map key {k!r}")
            val = self.value_domain.coerce(raw[k])
            if self.set_valued and not val:
                continue
            out.append((k, val))
        return tuple(out)

    def to_json(self, v: tuple) -> dict:
        return {k: self.value_domain.to_json(val) for k, val in v}

    def spec(self) -> dict:
        out = {"kind": "map", "keys": list(self.keys), "values": self.value_domain.spec()}
        if self.tombstone is not None:
            out["tombstone"] = self.tombstone
        return out

    def sample(self, rng: random.Random) -> tuple:
        options = [None] + self._entry_values()
        return tuple((k, v) for k in sorted(self.keys)
                     if (v := rng.choice(options)) is not None)

    def is_collection(self) -> bool:
        return True


def map_get(m: tuple, key: str, default: Any = None) -> Any:
    for k, v in m:
        if k == key:
            return v
    return default


def map_set(m: tuple, key: str, value: Any) -> tuple:
    """Return a copy of ``m`` with ``key`` bound to ``value`` (None removes)."""
    d = dict(m)
    if value is None or (isinstance(value, frozenset) and not value):
        d.pop(key, None)
    else:
        d[key] = value
    return tuple(sorted(d.items(), key=lambda kv: kv[0]))


def parse_domain(raw: Any, *, where: str = "domain") -> Domain:
    """Build a domain from its JSON description."""
    if not isinstance(raw, dict) or "kind" not in raw:
        raise DomainError(f"{where}: domain must be an object with a 'kind'")
    kind = raw["kind"]
    try:
        if kind == "int":
            if "min" not in raw or "max" not in raw:
                raise DomainError("integer domains need both 'min' and 'max' (no infinite domains)")
            lo, hi = raw["min"], raw["max"]
            if not all(isinstance(x, int) and not isinstance(x, bool) for x in (lo, hi)):
                raise DomainError("integer bounds must be integers")
            return IntRange(lo, hi)
        if kind == "bool":
            return BoolDomain()
        if kind == "enum":
            order = raw.get("order")
            return EnumDomain(tuple(raw.get("values", ())),
                              tuple(tuple(p) for p in order) if order is not None else None)
        if kind == "set":
            return SetDomain(tuple(raw.get("elements", ())))
        if kind == "map":
            vd = parse_domain(raw.get("values"), where=f"{where}.values")
            return MapDomain(tuple(raw.get("keys", ())), vd, raw.get("tombstone"))
    except NotALattice as exc:
        raise NotALattice(f"{where}: {exc}") from None
    except DomainError as exc:
        raise DomainError(f"{where}: {exc}") from None
    raise DomainError(f"{where}: unknown domain kind {kind!r}")
