"""Five-machine vending supply chain with confounded, drifting demand.

Demand is Poisson by (machine, segment), split by segment preference; a
customer buys the preferred product if the posted price is within their
weather-adjusted willingness to pay, and otherwise may substitute. The
operator sees censored sales ``min(demand, stock)``.

Stocking actions are order-up-to levels for every machine slot and for the
depot; the world executes them through depot, direct and depot-replenishment
shipments with their lead times and costs.
"""

from dataclasses import dataclass, field

import numpy as np
from scipy.stats import norm

from ..errors import InvalidActionError, WorldTerminatedError
from ..rng import substream

MACHINES = ("downtown", "suburb", "office_park", "university", "new_neighborhood")
SEGMENTS = ("commuter", "family", "student")
PRODUCTS = ("soda", "energy", "snack")

LAMBDA_TRUE = np.array([[6.0, 1.0, 2.0], [2.0, 4.0, 1.0], [5.0, 0.5, 0.5], [1.0, 0.5, 8.0], [1.0, 6.0, 2.0]])
LAMBDA_SIM = np.array([[5.5, 1.0, 2.0], [2.0, 4.0, 1.0], [5.0, 0.5, 0.5], [1.0, 0.5, 3.0], [1.0, 1.5, 1.0]])
DRIFT = np.array([0.0, 0.0, 0.0, 0.008, 0.006])
SIGMA_H = np.array([0.01, 0.01, 0.01, 0.02, 0.02])
CONFOUNDING = np.array([1.0, 1.0, 1.0, 0.47, 0.39])
TREND = np.array([-0.01, 0.0, 0.0, 0.0, 0.0])
COMPETITOR = np.array([0.0, 0.0, 0.25, 0.0, 0.0])
COMPETITOR_DAY = 60
GEO_GROUP = np.array([0, 1, 0, 2, 1])
GEO_SD = 0.08
SEASON_AMP = 0.40
WEATHER_RHO, WEATHER_INNOV, WEATHER_CLIP = 0.7, 0.3, 1.5
WEATHER_SENS = np.array([0.4, 0.1, 0.05])

# Invented operating constants (see the decisions ledger).
WEEKDAY = np.array([1.2, 0.9, 1.1])
WEEKEND = np.array([0.5, 1.25, 0.75])
TOD = np.array([[0.5, 0.2, 0.3], [0.2, 0.4, 0.4], [0.2, 0.3, 0.5]])
PREFERENCE = np.array([[0.45, 0.35, 0.20], [0.40, 0.10, 0.50], [0.35, 0.40, 0.25]])
SUBSTITUTION = np.array([0.3, 0.5, 0.6])
WTP_MEAN = np.array([[1.9, 2.9, 1.6], [1.7, 2.6, 1.5], [1.5, 2.7, 1.3]])
WTP_SD = 0.3
WHOLESALE = np.array([0.60, 1.00, 0.50])
HOLDING = np.array([0.01, 0.02, 0.015])
SHELF_LIFE = np.array([120, 180, 60])
CAPACITY = 60
DEPOT_START = 200
BREAKDOWN_P = 0.02
FIXED_COST = 5 * 2.00
START_CASH = 2000.0
BANKRUPT_DAYS = 5
SHIP_DEPOT_VM = 0.05
SHIP_DIRECT = 0.15
SHIP_DEPOT_IN = 0.08
DIRECT_DELAY_P, DIRECT_PARTIAL_P, PARTIAL_FRAC = 0.05, 0.08, 0.70
VM_EMERGENCY_UNITS = 3
DEPOT_EMERGENCY_LEVEL, DEPOT_EMERGENCY_ORDER = 4, 10

N_M, N_S, N_P = LAMBDA_TRUE.shape[0], LAMBDA_TRUE.shape[1], len(PRODUCTS)
MAX_AGE = int(SHELF_LIFE.max())


def exploit_price():
    """Posted price of the learned policy: 2.5x wholesale, all machines."""
    return np.tile(2.5 * WHOLESALE, (N_M, 1))


def explore_price():
    """Pilot/explore price: 90% of the lowest segment WTP per product."""
    return np.tile(0.9 * WTP_MEAN.min(axis=0), (N_M, 1))


def purchase_prob(price, weather=0.0):
    """``P(WTP_eff >= price)`` per (machine, segment, product)."""
    price = np.broadcast_to(np.asarray(price, dtype=float), (N_M, N_P))
    thresh = price[:, None, :] / (1.0 + WEATHER_SENS * weather)
    return norm.sf((thresh - WTP_MEAN[None, :, :]) / WTP_SD)


def product_rates(seg_rates, price, weather=0.0):
    """Expected willing buyers per (machine, product) from per-segment arrival rates."""
    q = purchase_prob(price, weather)
    return np.einsum("ms,sp,msp->mp", seg_rates, PREFERENCE, q)


def sim_product_rates(price=None):
    """The simulator's calendar-neutral willing-buyer rate per (machine, product)."""
    return product_rates(LAMBDA_SIM, exploit_price() if price is None else price)


def calendar(t):
    """Deterministic per-(machine, segment) multiplier on day ``t`` (no hidden state)."""
    weekday = WEEKDAY if t % 7 < 5 else WEEKEND
    season = 1.0 + SEASON_AMP * np.sin(2.0 * np.pi * t / 365.0)
    trend = np.maximum(0.0, 1.0 + TREND * t)
    tod = 3.0 * TOD[:, t % 3]
    comp = 1.0 - COMPETITOR * (t >= COMPETITOR_DAY)
    shock = np.ones(N_M)
    if 50 <= t < 80:
        shock[0] = 0.45
    if t == 35:
        shock[4] = 2.5
    return (trend * comp * shock)[:, None] * (weekday * tod)[None, :] * season


@dataclass
class VendingAction:
    """Order-up-to levels per machine slot and for the depot, plus posted prices."""

    vm_target: np.ndarray
    price: np.ndarray
    depot_target: np.ndarray


@dataclass
class VendingObservation:
    day: int
    sales: np.ndarray
    censored: np.ndarray
    price: np.ndarray
    broken: np.ndarray
    revenue: float
    profit: float
    cash: float
    costs: dict = field(default_factory=dict)


def _consume(buckets, qty):
    """Remove ``qty`` units oldest-first from age buckets (last axis, oldest last)."""
    rev = buckets[..., ::-1]
    cum = np.cumsum(rev, axis=-1)
    take = np.clip(np.asarray(qty)[..., None] - (cum - rev), 0, rev)
    rev -= take
    return take[..., ::-1]


@dataclass
class _Shipment:
    due: int
    dest: int  # machine index, or -1 for the depot
    product: int
    qty: int


class VendingWorld:
    """One realization; sub-streams per subsystem keep environments policy-independent."""

    def __init__(self, seed, stochastic=True, start_stock=None):
        self.stochastic = stochastic
        self.r_hidden = substream(seed, "vending", "hidden")
        self.r_demand = substream(seed, "vending", "demand")
        self.r_weather = substream(seed, "vending", "weather")
        self.r_logistics = substream(seed, "vending", "logistics")
        self.h = np.ones(N_M)
        self.weather = 0.0
        self.day = 0
        self._cash_cents = int(round(100 * START_CASH))
        self.neg_days = 0
        self.terminated = False
        self.vm = np.zeros((N_M, N_P, MAX_AGE), dtype=np.int64)
        self.depot = np.zeros((N_P, MAX_AGE), dtype=np.int64)
        init = np.minimum(CAPACITY, np.ceil(2 * sim_product_rates())).astype(int) if start_stock is None else start_stock
        self.vm[..., 0] = init
        self.depot[:, 0] = DEPOT_START
        self.transit = []
        self.profits = []
        self.profit_cents = []

    @property
    def cash(self):
        """Cash in currency units; bookkeeping is exact in integer cents."""
        return self._cash_cents / 100.0

    @property
    def vm_stock(self):
        return self.vm.sum(axis=-1)

    @property
    def depot_stock(self):
        return self.depot.sum(axis=-1)

    def seg_rates(self, t=None):
        t = self.day if t is None else t
        return LAMBDA_TRUE * self.h[:, None] * calendar(t)

    def expected_demand(self, price=None, t=None):
        """Noise-free willing-buyer rate per slot today (weather neutral, no group shock)."""
        return product_rates(self.seg_rates(t), exploit_price() if price is None else price)

    def _in_transit(self, dest):
        out = np.zeros(N_P, dtype=np.int64)
        for s in self.transit:
            if s.dest == dest:
                out[s.product] += s.qty
        return out

    def _validate(self, action):
        for name, shape in (("vm_target", (N_M, N_P)), ("price", (N_M, N_P)), ("depot_target", (N_P,))):
            x = np.asarray(getattr(action, name))
            if x.shape != shape or not np.all(np.isfinite(x)):
                raise InvalidActionError(f"{name} must be a finite array of shape {shape}")
        if np.any(action.vm_target < 0) or np.any(action.vm_target > CAPACITY) or np.any(action.depot_target < 0):
            raise InvalidActionError("stock targets must lie in [0, capacity]")
        if np.any(action.price <= 0):
            raise InvalidActionError("prices must be positive")

    def step(self, action):
        if self.terminated:
            raise WorldTerminatedError("operator is bankrupt")
        self._validate(action)
        t = self.day
        cost = dict(shipping=0.0, wholesale=0.0, holding=0.0, spoilage=0.0, fixed=FIXED_COST)
        # Arrivals.
        due = [s for s in self.transit if s.due <= t]
        self.transit = [s for s in self.transit if s.due > t]
        for s in due:
            if s.dest < 0:
                self.depot[s.product, 0] += s.qty
            else:
                room = CAPACITY - self.vm[s.dest, s.product].sum()
                self.vm[s.dest, s.product, 0] += max(0, min(s.qty, room))
        # Depot -> machine restock, largest deficit first; shortfalls go direct.
        target = np.asarray(action.vm_target).astype(int)
        deficit = np.maximum(0, target - self.vm_stock)
        for p in range(N_P):
            for m in np.argsort(-deficit[:, p], kind="stable"):
                need = int(deficit[m, p])
                if need == 0:
                    continue
                moved = int(min(need, self.depot_stock[p]))
                if moved:
                    taken = _consume(self.depot[p], moved)
                    self.vm[m, p] += taken
                    cost["shipping"] += SHIP_DEPOT_VM * moved
                short = need - moved - int(self._in_transit(m)[p])
                if short > 0:
                    self._order(t, m, p, short, direct=True, cost=cost)
        # Warehouse -> depot replenishment.
        depot_gap = np.asarray(action.depot_target).astype(int) - self.depot_stock - self._in_transit(-1)
        for p in np.flatnonzero(depot_gap > 0):
            self._order(t, -1, int(p), int(depot_gap[p]), direct=False, cost=cost)
        # Exogenous state for today.
        if self.stochastic:
            self.weather = float(np.clip(WEATHER_RHO * self.weather + WEATHER_INNOV * self.r_weather.standard_normal(),
                                         -WEATHER_CLIP, WEATHER_CLIP))
            geo = GEO_SD * self.r_demand.standard_normal(3)[GEO_GROUP]
        else:
            geo = np.zeros(N_M)
        price = np.asarray(action.price, dtype=float)
        lam = np.maximum(0.01, self.seg_rates(t) * (1.0 + geo)[:, None])
        sales, censored, broken = self._demand(lam, price)
        revenue = float(np.sum(sales * price))
        # Fallback triggers.
        for m, p in zip(*np.nonzero(self.vm_stock == 0)):
            k = int(min(VM_EMERGENCY_UNITS, self.depot_stock[p]))
            if k:
                self.vm[m, p] += _consume(self.depot[p], k)
                cost["shipping"] += SHIP_DEPOT_VM * k
        for p in np.flatnonzero(self.depot_stock <= DEPOT_EMERGENCY_LEVEL):
            self._order(t, -1, int(p), DEPOT_EMERGENCY_ORDER, direct=False, cost=cost)
        # Holding, then ageing and spoilage.
        cost["holding"] = float(np.sum(self.vm_stock * HOLDING) + np.sum(self.depot_stock * HOLDING))
        spoiled = 0.0
        for p in range(N_P):
            life = SHELF_LIFE[p]
            spoiled += WHOLESALE[p] * (self.vm[:, p, life - 1].sum() + self.depot[p, life - 1])
            self.vm[:, p, life - 1] = 0
            self.depot[p, life - 1] = 0
        self.vm[..., 1:] = self.vm[..., :-1].copy()
        self.vm[..., 0] = 0
        self.depot[:, 1:] = self.depot[:, :-1].copy()
        self.depot[:, 0] = 0
        cost["spoilage"] = float(spoiled)
        profit_cents = int(round(100.0 * (revenue - sum(cost.values()))))
        profit = profit_cents / 100.0
        self.profits.append(profit)
        self.profit_cents.append(profit_cents)
        self._cash_cents += profit_cents
        self.neg_days = self.neg_days + 1 if self.cash < 0 else 0
        self.terminated = self.neg_days >= BANKRUPT_DAYS
        # Hidden state drifts after the day's demand.
        noise = self.r_hidden.standard_normal(N_M) * SIGMA_H if self.stochastic else 0.0
        self.h = np.maximum(0.05, self.h + DRIFT + noise)
        self.day += 1
        return VendingObservation(t, sales, censored, price, broken, revenue, profit, self.cash, cost)

    def _order(self, t, dest, p, qty, direct, cost):
        r = self.r_logistics
        if direct:
            lead = max(1, int(round(r.normal(2.0, 0.7)))) if self.stochastic else 2
            cost["wholesale"] += WHOLESALE[p] * qty
            cost["shipping"] += SHIP_DIRECT * qty
            if self.stochastic and r.random() < DIRECT_DELAY_P:
                lead += 1
            if self.stochastic and r.random() < DIRECT_PARTIAL_P:
                first = int(np.floor(PARTIAL_FRAC * qty))
                self.transit.append(_Shipment(t + lead, dest, p, first))
                self.transit.append(_Shipment(t + lead + 1, dest, p, qty - first))
                return
        else:
            lead = max(1, int(round(r.normal(1.0, 0.3)))) if self.stochastic else 1
            cost["wholesale"] += WHOLESALE[p] * qty
            cost["shipping"] += SHIP_DEPOT_IN * qty
        self.transit.append(_Shipment(t + lead, dest, p, qty))

    def _demand(self, lam, price):
        r = self.r_demand
        broken = (r.random(N_M) < BREAKDOWN_P) if self.stochastic else np.zeros(N_M, dtype=bool)
        arrivals = r.poisson(lam)
        pref = r.multinomial(arrivals, PREFERENCE[None, :, :].repeat(N_M, axis=0))
        q = purchase_prob(price, self.weather)
        willing = r.binomial(pref, q)  # [m, s, p]
        willing[broken] = 0
        stock = self.vm_stock
        want = willing.sum(axis=1)
        primary = np.minimum(want, stock)
        censored = want >= stock
        left = stock - primary
        sub_sales = np.zeros((N_M, N_P), dtype=np.int64)
        for m, p in zip(*np.nonzero(want > primary)):
            unmet = r.multivariate_hypergeometric(willing[m, :, p], int(want[m, p] - primary[m, p]))
            for s in np.flatnonzero(unmet):
                n_sub = r.binomial(unmet[s], SUBSTITUTION[s])
                if n_sub == 0:
                    continue
                alt_w = PREFERENCE[s].copy()
                alt_w[p] = 0.0
                choice = r.multinomial(n_sub, alt_w / alt_w.sum())
                a_pref = price[m, p] / (1.0 + WEATHER_SENS[p] * self.weather)
                base = norm.sf((a_pref - WTP_MEAN[s, p]) / WTP_SD)
                for alt in np.flatnonzero(choice):
                    b = price[m, alt] / (1.1 * (1.0 + WEATHER_SENS[alt] * self.weather))
                    acc = norm.sf((max(a_pref, b) - WTP_MEAN[s, p]) / WTP_SD) / base if base > 0 else 0.0
                    buy = min(int(r.binomial(choice[alt], min(1.0, acc))), int(left[m, alt]))
                    left[m, alt] -= buy
                    sub_sales[m, alt] += buy
        sales = primary + sub_sales
        _consume(self.vm, sales)
        return sales, censored, broken
