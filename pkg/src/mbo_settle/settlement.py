"""Transaction settlement batches and their penalized mixed-binary form.

A batch consists of parties owning accounts, transactions that move amounts
between accounts of two parties, and optional credit/collateral facilities
that let a party's account limits float subject to a shared pool.

Settling transaction ``i`` (``x_i = 1``) adds its leg amounts to the owning
accounts. Settlement order within a batch is ignored: only the settled set
affects the final balances.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Sequence

import numpy as np

from . import pool as _pool
from .mbo_core import (
    MAXIMIZE,
    ContinuousDomain,
    JointQuadratic,
    LimitGroup,
    LinearEqualityPenalty,
    LinearRelation,
    MBOProblem,
)

TOL = 1e-9


@dataclass(frozen=True)
class Party:
    name: str
    accounts: tuple[int, ...]
    balance: tuple[float, ...]
    credit_limit: tuple[float, ...]


@dataclass(frozen=True)
class Leg:
    account: int
    amount: float


@dataclass(frozen=True)
class Transaction:
    weight: float
    legs: tuple[Leg, ...]


@dataclass(frozen=True)
class Facility:
    """Shared credit pool over some accounts of one party.

    ``pool_relation`` is ``"eq"`` for a net-zero pool (``r . l == pool_limit``)
    and ``"geq"`` for ``r . l >= pool_limit``.
    """

    party: int
    accounts: tuple[int, ...]
    exchange: tuple[float, ...]
    pool_limit: float
    pool_relation: str = "geq"
    limit_lower: tuple[float, ...] = ()
    limit_upper: tuple[float, ...] = ()

    @property
    def relation(self) -> str:
        return "==" if self.pool_relation == "eq" else ">="


@dataclass(frozen=True)
class SettlementInstance:
    accounts: tuple[str, ...]
    parties: tuple[Party, ...]
    transactions: tuple[Transaction, ...]
    facilities: tuple[Facility, ...] = ()
    assets: tuple[str, ...] | None = None
    name: str = ""

    @property
    def n_transactions(self) -> int:
        return len(self.transactions)

    @property
    def weights(self) -> np.ndarray:
        return np.array([t.weight for t in self.transactions], dtype=float)

    def owner(self) -> np.ndarray:
        """Party index owning each account (-1 when unowned)."""
        own = np.full(len(self.accounts), -1)
        for k, p in enumerate(self.parties):
            for a in p.accounts:
                if 0 <= a < len(self.accounts):
                    own[a] = k
        return own

    def balances(self) -> np.ndarray:
        b = np.zeros(len(self.accounts))
        for p in self.parties:
            for a, v in zip(p.accounts, p.balance):
                b[a] = v
        return b

    def fixed_limits(self) -> np.ndarray:
        lim = np.zeros(len(self.accounts))
        for p in self.parties:
            for a, v in zip(p.accounts, p.credit_limit):
                lim[a] = v
        return lim

    def leg_matrix(self) -> np.ndarray:
        """``V[i, a]``: amount transaction ``i`` moves into account ``a``."""
        V = np.zeros((self.n_transactions, len(self.accounts)))
        for i, t in enumerate(self.transactions):
            for leg in t.legs:
                V[i, leg.account] += leg.amount
        return V

    def facility_accounts(self) -> set[int]:
        return {a for f in self.facilities for a in f.accounts}


def validate(instance: SettlementInstance) -> list[str]:
    """Every violated structural invariant, as readable messages (empty list = valid)."""
    errors: list[str] = []
    J = len(instance.accounts)
    seen: dict[int, str] = {}
    for p in instance.parties:
        if not (len(p.accounts) == len(p.balance) == len(p.credit_limit)):
            errors.append(f"party {p.name}: accounts/balance/credit_limit lengths differ")
        for a in p.accounts:
            if not 0 <= a < J:
                errors.append(f"party {p.name}: account index {a} out of range")
            elif a in seen:
                errors.append(f"account {instance.accounts[a]} owned by both {seen[a]} and {p.name}")
            else:
                seen[a] = p.name
    for a in range(J):
        if a not in seen:
            errors.append(f"account {instance.accounts[a]} has no owner")
    if instance.assets is not None and len(instance.assets) != J:
        errors.append("assets must list one asset per account")
    if errors:
        return errors

    owner = instance.owner()
    for i, t in enumerate(instance.transactions):
        label = f"transaction {i + 1}"
        if not t.weight >= 0:
            errors.append(f"{label}: weight must be nonnegative")
        if any(not 0 <= leg.account < J for leg in t.legs):
            errors.append(f"{label}: leg account out of range")
            continue
        by_party: dict[int, list[Leg]] = {}
        for leg in t.legs:
            by_party.setdefault(int(owner[leg.account]), []).append(leg)
        if len(by_party) != 2:
            errors.append(f"{label}: must involve exactly two parties, found {len(by_party)}")
            continue
        (ka, legs_a), (kb, legs_b) = sorted(by_party.items())
        if len(legs_a) != len(legs_b) or len(legs_a) not in (1, 2):
            errors.append(f"{label}: each party needs one (payment) or two (DvP) legs")
            continue
        if not _antisymmetric(instance, ka, legs_a, kb, legs_b):
            errors.append(f"{label}: legs not antisymmetric between the two parties")

    facility_seen: set[int] = set()
    for f_idx, f in enumerate(instance.facilities):
        label = f"facility {f_idx + 1}"
        if not 0 <= f.party < len(instance.parties):
            errors.append(f"{label}: party index out of range")
            continue
        party = instance.parties[f.party]
        if len(f.exchange) != len(f.accounts):
            errors.append(f"{label}: one exchange factor per account required")
        if any(not r > 0 for r in f.exchange):
            errors.append(f"{label}: exchange factors must be > 0")
        if not f.pool_limit <= 0:
            errors.append(f"{label}: pool limit must be <= 0")
        if f.pool_relation not in ("eq", "geq"):
            errors.append(f"{label}: pool_relation must be 'eq' or 'geq'")
        if len(f.limit_lower) != len(f.accounts):
            errors.append(f"{label}: limit_lower must give one bound per account")
        if f.limit_upper and len(f.limit_upper) != len(f.accounts):
            errors.append(f"{label}: limit_upper must give one bound per account")
        elif f.limit_upper and any(lo > hi for lo, hi in zip(f.limit_lower, f.limit_upper)):
            errors.append(f"{label}: limit_lower exceeds limit_upper")
        for a in f.accounts:
            if a not in party.accounts:
                errors.append(f"{label}: account {a} is not owned by {party.name}")
            if a in facility_seen:
                errors.append(f"{label}: account {a} already belongs to another facility")
            facility_seen.add(a)
    return errors


def _antisymmetric(instance, ka, legs_a, kb, legs_b) -> bool:
    if instance.assets is not None:
        total: dict[str, float] = {}
        for leg in legs_a + legs_b:
            asset = instance.assets[leg.account]
            total[asset] = total.get(asset, 0.0) + leg.amount
        return all(abs(v) <= TOL for v in total.values())
    # positional matching: the j-th owned account of each party holds the same asset
    pa, pb = instance.parties[ka], instance.parties[kb]
    va = {pa.accounts.index(leg.account): leg.amount for leg in legs_a}
    vb = {pb.accounts.index(leg.account): leg.amount for leg in legs_b}
    keys = set(va) | set(vb)
    return all(abs(va.get(j, 0.0) + vb.get(j, 0.0)) <= TOL for j in keys)


class InvalidInstance(ValueError):
    def __init__(self, errors: Sequence[str]):
        super().__init__("invalid settlement instance: " + "; ".join(errors))
        self.errors = list(errors)


def check(instance: SettlementInstance) -> SettlementInstance:
    errors = validate(instance)
    if errors:
        raise InvalidInstance(errors)
    return instance


def _bits(instance: SettlementInstance, x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if isinstance(x, np.ndarray) and x.ndim == 0:
        raise ValueError("x must be a vector")
    if x.shape[-1] != instance.n_transactions:
        raise ValueError(f"x has length {x.shape[-1]}, expected {instance.n_transactions}")
    return x


def net_position(instance: SettlementInstance, x) -> np.ndarray:
    """Account amounts after settling ``x`` (accepts a single vector or a stack of them)."""
    x = _bits(instance, x)
    return instance.balances() + x @ instance.leg_matrix()


def feasible_mask(instance: SettlementInstance, X) -> np.ndarray:
    """``is_feasible`` for each row of the 0/1 matrix ``X``."""
    X = np.atleast_2d(_bits(instance, X))
    net = net_position(instance, X)
    lim = instance.fixed_limits()
    ok = np.ones(X.shape[0], dtype=bool)
    in_facility = instance.facility_accounts()
    fixed = [a for a in range(len(instance.accounts)) if a not in in_facility]
    if fixed:
        ok &= np.all(net[:, fixed] >= lim[fixed] - TOL, axis=1)
    for f in instance.facilities:
        upper = f.limit_upper or (np.inf,) * len(f.accounts)
        ok &= _pool.pool_feasible(
            net[:, list(f.accounts)], f.limit_lower, upper, f.exchange, f.pool_limit, f.relation
        )
    return ok


def is_feasible(instance: SettlementInstance, x) -> bool:
    return bool(feasible_mask(instance, np.asarray(x, dtype=float)[None, :])[0])


def settled_value(instance: SettlementInstance, x) -> float:
    return float(np.asarray(x, dtype=float) @ instance.weights)


def _always_satisfied(instance: SettlementInstance, a: int, V, b, lim) -> bool:
    return bool(np.all(V[:, a] >= 0) and b[a] >= lim[a])


@dataclass(frozen=True, eq=False)
class SettlementMBO(MBOProblem):
    """``MBOProblem`` built from a settlement instance (``rows[k]`` = account of penalty ``k``)."""

    instance: SettlementInstance = None
    rows: tuple[int, ...] = ()


def kept_accounts(instance: SettlementInstance, prune: str = "party") -> list[int]:
    """Accounts whose constraint enters the penalized model.

    ``prune="party"`` drops a party's whole constraint block when every one of
    its accounts is satisfied for all ``x`` (nonnegative leg amounts, balance at
    or above the fixed limit, no facility). ``"account"`` applies the same test
    per account, ``"none"`` keeps everything.
    """
    if prune not in ("party", "account", "none"):
        raise ValueError(f"unknown prune mode {prune!r}")
    V, b, lim = instance.leg_matrix(), instance.balances(), instance.fixed_limits()
    in_facility = instance.facility_accounts()

    def trivial(a):
        return a not in in_facility and _always_satisfied(instance, a, V, b, lim)

    kept = []
    for p in instance.parties:
        if prune == "party" and all(trivial(a) for a in p.accounts):
            continue
        kept.extend(a for a in p.accounts if prune != "account" or not trivial(a))
    return sorted(kept)


def to_mbo(instance: SettlementInstance, lam: float, prune: str = "party") -> SettlementMBO:
    """Slack-variable, quadratic-penalty form of the settlement problem.

    Continuous variables are one slack ``s_a >= 0`` per kept account followed by
    one variable limit ``l_a`` per facility account. Each kept account ``a``
    contributes ``lam * (b_a + sum_i x_i V[i, a] - l_a - s_a)**2``, with ``l_a``
    the fixed credit limit outside facilities.
    """
    if not lam > 0:
        raise ValueError(f"penalty weight must be positive, got {lam}")
    check(instance)
    V, b, lim = instance.leg_matrix(), instance.balances(), instance.fixed_limits()
    rows = kept_accounts(instance, prune)
    limit_accounts = [a for f in instance.facilities for a in f.accounts]
    n_slack = len(rows)
    m = n_slack + len(limit_accounts)
    limit_var = {a: n_slack + j for j, a in enumerate(limit_accounts)}

    lower = [0.0] * n_slack
    upper = [np.inf] * n_slack
    labels = [f"s[{instance.accounts[a]}]" for a in rows]
    for f in instance.facilities:
        up = f.limit_upper or (np.inf,) * len(f.accounts)
        lower.extend(float(v) for v in f.limit_lower)
        upper.extend(float(v) for v in up)
        labels.extend(f"l[{instance.accounts[a]}]" for a in f.accounts)

    penalties = []
    for k, a in enumerate(rows):
        U = np.zeros(m)
        U[k] = -1.0
        if a in limit_var:
            U[limit_var[a]] = -1.0
            v = b[a]
        else:
            v = b[a] - lim[a]
        penalties.append(LinearEqualityPenalty(V[:, a], U, v, lam))

    relations = []
    groups = []
    for f in instance.facilities:
        coeff = np.zeros(m)
        for a, r in zip(f.accounts, f.exchange):
            coeff[limit_var[a]] = r
        relations.append(LinearRelation(tuple(coeff), float(f.pool_limit), f.relation))
        groups.append(
            LimitGroup(
                variables=tuple(limit_var[a] for a in f.accounts),
                rows=tuple(rows.index(a) for a in f.accounts),
                exchange=tuple(float(r) for r in f.exchange),
                pool=float(f.pool_limit),
                relation=f.relation,
                lower=tuple(float(v) for v in f.limit_lower),
                upper=tuple(float(v) for v in (f.limit_upper or (np.inf,) * len(f.accounts))),
            )
        )

    base = JointQuadratic(n=instance.n_transactions, m=m, qx=instance.weights, sense=MAXIMIZE)
    domain = ContinuousDomain(m, tuple(lower), tuple(upper), tuple(relations))
    generic = MBOProblem.build(base, domain, penalties, range(n_slack), groups, labels)
    return SettlementMBO(
        objective=generic.objective,
        domain=generic.domain,
        base=generic.base,
        penalties=generic.penalties,
        slack_index=generic.slack_index,
        limit_groups=generic.limit_groups,
        labels=generic.labels,
        instance=instance,
        rows=tuple(rows),
    )


# --- built-in instances -------------------------------------------------------


def _dvp(payer: tuple[int, int], payee: tuple[int, int], cash: float, units: float) -> Transaction:
    """Payer hands over ``cash`` and receives ``units`` of the security."""
    (pc, ps), (qc, qs) = payer, payee
    return Transaction(
        1.0, (Leg(pc, -cash), Leg(ps, units), Leg(qc, cash), Leg(qs, -units))
    )


def _three_dvp(p1_balance: tuple[float, float]) -> tuple[tuple[str, ...], tuple[Party, ...], tuple[Transaction, ...]]:
    accounts = ("P1.C", "P1.S", "P2.C", "P2.S", "P3.C", "P3.S")
    parties = (
        Party("P1", (0, 1), p1_balance, (0.0, 0.0)),
        Party("P2", (2, 3), (0.0, 3.0), (0.0, 0.0)),
        Party("P3", (4, 5), (0.0, 0.0), (0.0, 0.0)),
    )
    P1, P2, P3 = (0, 1), (2, 3), (4, 5)
    transactions = (
        _dvp(P1, P2, 1.0, 2.0),
        _dvp(P3, P2, 1.0, 2.0),
        _dvp(P1, P3, 1.0, 2.0),
    )
    return accounts, parties, transactions


def _payments() -> SettlementInstance:
    names = ("P1", "P2", "P3", "P4", "P5", "P6")
    balances = (5.0, 1.0, 2.0, 3.0, 2.0, 1.0)
    parties = tuple(Party(nm, (k,), (bal,), (0.0,)) for k, (nm, bal) in enumerate(zip(names, balances)))
    flows = ((0, 1, 4), (0, 2, 3), (0, 3, 2), (1, 4, 3), (1, 5, 3), (4, 5, 6), (5, 4, 4))
    transactions = tuple(
        Transaction(1.0, (Leg(src, -amt), Leg(dst, float(amt)))) for src, dst, amt in flows
    )
    return SettlementInstance(
        tuple(f"{nm}.C" for nm in names), parties, transactions, name="case3-payments"
    )


def builtin_instance(case: int) -> SettlementInstance:
    """Built-in batches: 1 = three DvP trades, 2 = same with a facility on P1, 3 = seven payments."""
    if case == 1:
        accounts, parties, transactions = _three_dvp((2.0, 0.0))
        return SettlementInstance(accounts, parties, transactions, name="case1-dvp")
    if case == 2:
        accounts, parties, transactions = _three_dvp((0.0, 1.0))
        facility = Facility(
            party=0,
            accounts=(0, 1),
            exchange=(1.0, 2.0),
            pool_limit=0.0,
            pool_relation="eq",
            limit_lower=(-2.0, 0.0),
        )
        return SettlementInstance(accounts, parties, transactions, (facility,), name="case2-dvp-facility")
    if case == 3:
        return _payments()
    raise ValueError(f"unknown built-in case {case!r}; expected 1, 2 or 3")


# --- JSON ---------------------------------------------------------------------


def _num(v) -> float:
    return float("inf") if v is None else float(v)


def from_dict(data: dict[str, Any]) -> SettlementInstance:
    """Parse the instance JSON layout (0-based account indices)."""
    try:
        accounts = tuple(str(a) for a in data["accounts"])
        parties = tuple(
            Party(
                str(p["name"]),
                tuple(int(a) for a in p["accounts"]),
                tuple(float(v) for v in p["balance"]),
                tuple(float(v) for v in p.get("credit_limit", [0.0] * len(p["accounts"]))),
            )
            for p in data.get("parties", [])
        )
        names = [p.name for p in parties]
        transactions = tuple(
            Transaction(
                float(t.get("weight", 1.0)),
                tuple(Leg(int(leg["account"]), float(leg["amount"])) for leg in t["legs"]),
            )
            for t in data.get("transactions", [])
        )
        facilities = []
        for f in data.get("facilities", []):
            party = f["party"]
            party = names.index(party) if isinstance(party, str) else int(party)
            facilities.append(
                Facility(
                    party=party,
                    accounts=tuple(int(a) for a in f["accounts"]),
                    exchange=tuple(float(r) for r in f["exchange"]),
                    pool_limit=float(f["pool_limit"]),
                    pool_relation=str(f.get("pool_relation", "geq")),
                    limit_lower=tuple(float("-inf") if v is None else float(v) for v in f.get("limit_lower", [])),
                    limit_upper=tuple(_num(v) for v in f.get("limit_upper", [])),
                )
            )
        assets = data.get("assets")
    except (KeyError, TypeError, ValueError) as exc:
        raise ValueError(f"malformed instance data: {exc!r}") from exc
    return SettlementInstance(
        accounts,
        parties,
        transactions,
        tuple(facilities),
        tuple(assets) if assets is not None else None,
        name=str(data.get("name", "")),
    )


def _json_bound(v: float):
    return None if not np.isfinite(v) else v


def to_dict(instance: SettlementInstance) -> dict[str, Any]:
    out: dict[str, Any] = {
        "name": instance.name,
        "accounts": list(instance.accounts),
        "parties": [
            {
                "name": p.name,
                "accounts": list(p.accounts),
                "balance": list(p.balance),
                "credit_limit": list(p.credit_limit),
            }
            for p in instance.parties
        ],
        "transactions": [
            {"weight": t.weight, "legs": [{"account": leg.account, "amount": leg.amount} for leg in t.legs]}
            for t in instance.transactions
        ],
        "facilities": [
            {
                "party": f.party,
                "accounts": list(f.accounts),
                "exchange": list(f.exchange),
                "pool_limit": f.pool_limit,
                "pool_relation": f.pool_relation,
                "limit_lower": [_json_bound(v) for v in f.limit_lower],
                "limit_upper": [_json_bound(v) for v in f.limit_upper],
            }
            for f in instance.facilities
        ],
    }
    if instance.assets is not None:
        out["assets"] = list(instance.assets)
    return out


def load_instance(path: str | Path) -> SettlementInstance:
    """Read and validate an instance file; raises :class:`InvalidInstance` on semantic errors."""
    with open(path, encoding="utf-8") as fh:
        return check(from_dict(json.load(fh)))
