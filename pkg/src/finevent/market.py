"""Minute-level trade features, window tensors, and movement labels.

Sessions run 09:00-15:00; bars carry minute-of-day stamps in [540, 900).
News inside [09:10, 14:50] on a trade day is in-trade: its window is the same
day from the open up to the minute before the news.  Anything else uses the
most recent completed session.  Labels compare the stock's return against its
sector index return over the same endpoints.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, replace
from datetime import date, datetime
from typing import Iterable

import numpy as np

from .corpus import AnnotatedNews
from .extraction import RoleLabelSequence

SESSION_OPEN = 9 * 60  # 09:00
SESSION_END = 15 * 60  # 15:00 (exclusive bar stamp bound)
TRADE_TIME_LO = 9 * 60 + 10  # 09:10 inclusive
TRADE_TIME_HI = 14 * 60 + 50  # 14:50 inclusive

RAW_FIELDS = ("open", "close", "high", "low", "volume", "vwap")
MINUTES_PER_STEP = 10
FEATURES_PER_MINUTE = 12
STEP_WIDTH = MINUTES_PER_STEP * FEATURES_PER_MINUTE  # 120

BUCKET_TRADE = "trade_time"
BUCKET_OFF_TIME = "out_of_trade_time"
BUCKET_OFF_DAY = "out_of_trade_day"
BUCKETS = (BUCKET_TRADE, BUCKET_OFF_TIME, BUCKET_OFF_DAY)


class MarketDataError(ValueError):
    pass


@dataclass(frozen=True)
class MinuteBar:
    minute: int  # minute of day
    open: float
    close: float
    high: float
    low: float
    volume: float
    value: float
    vwap: float


def check_bar(bar: MinuteBar) -> None:
    if not (bar.low <= min(bar.open, bar.close, bar.vwap)
            and max(bar.open, bar.close, bar.vwap) <= bar.high):
        raise MarketDataError(f"bar at minute {bar.minute}: prices outside [low, high]")
    if bar.volume < 0 or bar.value < 0:
        raise MarketDataError(f"bar at minute {bar.minute}: negative volume/value")


@dataclass(frozen=True)
class TradeWindowTensor:
    data: np.ndarray  # T x 120 float64
    scaled: bool

    def __post_init__(self):
        if self.data.ndim != 2 or self.data.shape[1] != STEP_WIDTH:
            raise MarketDataError(f"window tensor must be T x {STEP_WIDTH}")
        if not np.all(np.isfinite(self.data)):
            raise MarketDataError("window tensor has non-finite entries")
        if self.scaled and (self.data.min() < 0.0 or self.data.max() > 1.0):
            raise MarketDataError("scaled window outside [0, 1]")

    @property
    def steps(self) -> int:
        return self.data.shape[0]


@dataclass
class MovementSample:
    news: AnnotatedNews
    window: TradeWindowTensor
    roles: RoleLabelSequence
    label: int  # 1 = up, 0 = down
    time_bucket: str
    spo: RoleLabelSequence | None = None  # coarse alternative labeling
    final_return: float = 0.0  # sector-corrected return behind the label


@dataclass(frozen=True)
class TradeCalendar:
    days: tuple[date, ...]  # sorted trade days

    def __post_init__(self):
        if list(self.days) != sorted(set(self.days)):
            raise MarketDataError("calendar days must be sorted and unique")
        object.__setattr__(self, "_day_set", frozenset(self.days))

    def is_trade_day(self, d: date) -> bool:
        return d in self._day_set

    def prev_trade_day(self, d: date) -> date:
        before = [x for x in self.days if x < d]
        if not before:
            raise MarketDataError(f"no trade day before {d}")
        return before[-1]

    def next_trade_day(self, d: date) -> date:
        after = [x for x in self.days if x > d]
        if not after:
            raise MarketDataError(f"no trade day after {d}")
        return after[0]


def time_bucket(news_time: datetime, calendar: TradeCalendar) -> str:
    minute = news_time.hour * 60 + news_time.minute
    if not calendar.is_trade_day(news_time.date()):
        return BUCKET_OFF_DAY
    if TRADE_TIME_LO <= minute <= TRADE_TIME_HI:
        return BUCKET_TRADE
    return BUCKET_OFF_TIME


def last_completed_session(news_time: datetime, calendar: TradeCalendar) -> date:
    """Most recent trade day whose session has finished by news time.

    News after 14:50 on a trade day counts that same day as completed (its
    remaining minutes are too close to the close to use as input)."""
    d = news_time.date()
    minute = news_time.hour * 60 + news_time.minute
    if calendar.is_trade_day(d) and minute > TRADE_TIME_HI:
        return d
    return calendar.prev_trade_day(d)


def _pad_bars(bars: list[MinuteBar], end_minute: int) -> list[MinuteBar]:
    """Contiguous minutes from the first traded minute; interior gaps repeat
    the last traded bar.  Minutes past the last traded bar are dropped."""
    if not bars:
        return []
    last_traded = bars[-1].minute
    stop = min(end_minute, last_traded)
    out: list[MinuteBar] = []
    it = iter(bars)
    cur = next(it)
    nxt = next(it, None)
    for minute in range(bars[0].minute, stop + 1):
        while nxt is not None and nxt.minute <= minute:
            cur = nxt
            nxt = next(it, None)
        out.append(cur if cur.minute == minute else replace(cur, minute=minute))
    return out


def select_trade_window(
    news_time: datetime,
    calendar: TradeCalendar,
    bars_by_day: dict[date, list[MinuteBar]],
) -> list[MinuteBar]:
    """Bars feeding the model: same-day open..news-1 for in-trade news, else
    the whole last completed session.  Never includes the news minute."""
    bucket = time_bucket(news_time, calendar)
    if bucket == BUCKET_TRADE:
        day = news_time.date()
        end = news_time.hour * 60 + news_time.minute - 1
    else:
        day = last_completed_session(news_time, calendar)
        end = SESSION_END - 1
    day_bars = [b for b in bars_by_day.get(day, []) if SESSION_OPEN <= b.minute <= end]
    padded = _pad_bars(sorted(day_bars, key=lambda b: b.minute), end)
    if not padded:
        raise MarketDataError(f"no bars available for session {day}")
    return padded


def build_minute_features(bars: list[MinuteBar]) -> np.ndarray:
    """M x 12 feature matrix: six raw fields then their change rates vs the
    previous minute (first minute and zero-denominator cases give 0).
    Trade value is collected upstream but not a feature."""
    if not bars:
        raise MarketDataError("empty bar list")
    raw = np.array(
        [[b.open, b.close, b.high, b.low, b.volume, b.vwap] for b in bars],
        dtype=np.float64,
    )
    rates = np.zeros_like(raw)
    if len(bars) > 1:
        prev = raw[:-1]
        delta = raw[1:] - prev
        with np.errstate(divide="ignore", invalid="ignore"):
            r = np.where(prev != 0.0, delta / np.where(prev == 0.0, 1.0, prev), 0.0)
        rates[1:] = r
    return np.concatenate([raw, rates], axis=1)


def window_trade_data(features: np.ndarray) -> np.ndarray:
    """Stack each 10-minute run into one 120-wide row; the final partial step
    repeats the last minute's features."""
    m = features.shape[0]
    if m == 0:
        raise MarketDataError("empty feature matrix")
    steps = (m + MINUTES_PER_STEP - 1) // MINUTES_PER_STEP
    padded = np.concatenate(
        [features] + [features[-1:]] * (steps * MINUTES_PER_STEP - m), axis=0
    )
    return padded.reshape(steps, STEP_WIDTH)


@dataclass
class MinMaxScaler:
    per_stock: dict[str, tuple[np.ndarray, np.ndarray]]
    pooled: tuple[np.ndarray, np.ndarray]

    def bounds(self, stock_id: str) -> tuple[np.ndarray, np.ndarray]:
        return self.per_stock.get(stock_id, self.pooled)

    def to_jsonable(self) -> dict:
        return {
            "per_stock": {
                s: [mn.tolist(), mx.tolist()] for s, (mn, mx) in sorted(self.per_stock.items())
            },
            "pooled": [self.pooled[0].tolist(), self.pooled[1].tolist()],
        }

    @classmethod
    def from_jsonable(cls, obj: dict) -> "MinMaxScaler":
        per_stock = {
            s: (np.asarray(mn, dtype=np.float64), np.asarray(mx, dtype=np.float64))
            for s, (mn, mx) in obj["per_stock"].items()
        }
        pooled = (
            np.asarray(obj["pooled"][0], dtype=np.float64),
            np.asarray(obj["pooled"][1], dtype=np.float64),
        )
        return cls(per_stock, pooled)


def fit_minmax_scaler(train_windows: dict[str, list[np.ndarray]]) -> MinMaxScaler:
    """Column-wise (min, max) per stock over that stock's training rows only,
    plus a pooled fallback for stocks unseen in training."""
    per_stock = {}
    all_rows = []
    for stock_id in sorted(train_windows):
        rows = np.concatenate(train_windows[stock_id], axis=0)
        per_stock[stock_id] = (rows.min(axis=0), rows.max(axis=0))
        all_rows.append(rows)
    if not all_rows:
        raise MarketDataError("scaler fit needs at least one training window")
    pooled_rows = np.concatenate(all_rows, axis=0)
    return MinMaxScaler(per_stock, (pooled_rows.min(axis=0), pooled_rows.max(axis=0)))


def scale_window(matrix: np.ndarray, scaler: MinMaxScaler, stock_id: str) -> TradeWindowTensor:
    """(x - min) / (max - min) clamped to [0, 1]; constant columns map to 0.5."""
    mn, mx = scaler.bounds(stock_id)
    rng = mx - mn
    safe = np.where(rng == 0.0, 1.0, rng)
    scaled = np.clip((matrix - mn) / safe, 0.0, 1.0)
    scaled = np.where(rng == 0.0, 0.5, scaled)
    return TradeWindowTensor(scaled, scaled=True)


def _value_at_or_before(series: list[tuple[int, float]], minute: int) -> float:
    """Last (minute, value) entry at or before `minute`; series sorted."""
    out = None
    for m, v in series:
        if m <= minute:
            out = v
        else:
            break
    if out is None:
        raise MarketDataError(f"no value at or before minute {minute}")
    return out


def movement_from_prices(
    price_start: float, price_end: float, index_start: float, index_end: float
) -> tuple[int, float]:
    """Sector-corrected movement: final return = stock return - sector return;
    up (1) only when strictly positive."""
    if price_start == 0 or index_start == 0:
        raise MarketDataError("zero start price/index value")
    r_cmp = (price_end - price_start) / price_start
    r_sec = (index_end - index_start) / index_start
    r_f = r_cmp - r_sec
    return (1 if r_f > 0 else 0), r_f


def movement_label(
    stock_bars_by_day: dict[date, list[MinuteBar]],
    index_by_day: dict[date, list[tuple[int, float]]],
    news_time: datetime,
    calendar: TradeCalendar,
) -> tuple[int, float]:
    """Label endpoints: in-trade news compares the news-minute price with the
    day close; out-of-trade news compares the last session close with the next
    session open.  The index is read at the same endpoints."""
    bucket = time_bucket(news_time, calendar)
    if bucket == BUCKET_TRADE:
        day = news_time.date()
        minute = news_time.hour * 60 + news_time.minute
        bars = sorted(stock_bars_by_day.get(day, []), key=lambda b: b.minute)
        if not bars:
            raise MarketDataError(f"no bars on {day}")
        at_or_before = [b for b in bars if b.minute <= minute]
        if not at_or_before:
            raise MarketDataError(f"no trade at or before news minute on {day}")
        price_start = at_or_before[-1].close
        price_end = bars[-1].close
        idx = sorted(index_by_day.get(day, []))
        if not idx:
            raise MarketDataError(f"no index values on {day}")
        index_start = _value_at_or_before(idx, minute)
        index_end = idx[-1][1]
    else:
        last_day = last_completed_session(news_time, calendar)
        next_day = calendar.next_trade_day(last_day)
        last_bars = sorted(stock_bars_by_day.get(last_day, []), key=lambda b: b.minute)
        next_bars = sorted(stock_bars_by_day.get(next_day, []), key=lambda b: b.minute)
        if not last_bars or not next_bars:
            raise MarketDataError(f"missing bars around {last_day}/{next_day}")
        price_start = last_bars[-1].close
        price_end = next_bars[0].open
        last_idx = sorted(index_by_day.get(last_day, []))
        next_idx = sorted(index_by_day.get(next_day, []))
        if not last_idx or not next_idx:
            raise MarketDataError(f"missing index values around {last_day}/{next_day}")
        index_start = last_idx[-1][1]
        index_end = next_idx[0][1]
    return movement_from_prices(price_start, price_end, index_start, index_end)


# ---------------------------------------------------------------------------
# File formats


def minute_str(minute: int) -> str:
    return f"{minute // 60:02d}:{minute % 60:02d}"


def parse_minute(text: str) -> int:
    h, _, m = text.partition(":")
    return int(h) * 60 + int(m)


def load_bars(path: str) -> dict[tuple[str, date], list[MinuteBar]]:
    """CSV: stock,date,minute,open,close,high,low,volume,value,vwap."""
    out: dict[tuple[str, date], list[MinuteBar]] = {}
    with open(path, newline="", encoding="utf-8") as f:
        for row in csv.DictReader(f):
            bar = MinuteBar(
                minute=parse_minute(row["minute"]),
                open=float(row["open"]),
                close=float(row["close"]),
                high=float(row["high"]),
                low=float(row["low"]),
                volume=float(row["volume"]),
                value=float(row["value"]),
                vwap=float(row["vwap"]),
            )
            check_bar(bar)
            key = (row["stock"], date.fromisoformat(row["date"]))
            out.setdefault(key, []).append(bar)
    for bars in out.values():
        bars.sort(key=lambda b: b.minute)
    return out


def save_bars(path: str, bars: dict[tuple[str, date], list[MinuteBar]]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as f:
        w = csv.writer(f)
        w.writerow(["stock", "date", "minute", "open", "close", "high", "low",
                    "volume", "value", "vwap"])
        for (stock, day) in sorted(bars):
            for b in bars[(stock, day)]:
                # repr round-trips float64 exactly
                w.writerow([stock, day.isoformat(), minute_str(b.minute),
                            repr(b.open), repr(b.close), repr(b.high),
                            repr(b.low), repr(b.volume), repr(b.value),
                            repr(b.vwap)])


def load_index_values(path: str) -> dict[tuple[str, date], list[tuple[int, float]]]:
    """CSV: index_id,date,minute,value."""
    out: dict[tuple[str, date], list[tuple[int, float]]] = {}
    with open(path, newline="", encoding="utf-8") as f:
        for row in csv.DictReader(f):
            key = (row["index_id"], date.fromisoformat(row["date"]))
            out.setdefault(key, []).append((parse_minute(row["minute"]), float(row["value"])))
    for series in out.values():
        series.sort()
    return out


def save_index_values(path: str, values: dict[tuple[str, date], list[tuple[int, float]]]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as f:
        w = csv.writer(f)
        w.writerow(["index_id", "date", "minute", "value"])
        for (index_id, day) in sorted(values):
            for minute, v in values[(index_id, day)]:
                w.writerow([index_id, day.isoformat(), minute_str(minute), f"{v:.6f}"])


def load_sector_map(path: str) -> dict[str, str]:
    """CSV: stock,index_id."""
    out = {}
    with open(path, newline="", encoding="utf-8") as f:
        for row in csv.DictReader(f):
            out[row["stock"]] = row["index_id"]
    return out


def save_sector_map(path: str, mapping: dict[str, str]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as f:
        w = csv.writer(f)
        w.writerow(["stock", "index_id"])
        for stock in sorted(mapping):
            w.writerow([stock, mapping[stock]])


def load_calendar(path: str) -> TradeCalendar:
    """One ISO trade date per line; # comments allowed."""
    days = []
    with open(path, encoding="utf-8") as f:
        for line in f:
            line = line.split("#", 1)[0].strip()
            if line:
                days.append(date.fromisoformat(line))
    return TradeCalendar(tuple(sorted(set(days))))


def save_calendar(path: str, calendar: TradeCalendar) -> None:
    with open(path, "w", encoding="utf-8") as f:
        for d in calendar.days:
            f.write(d.isoformat() + "\n")


def stock_day_windows(
    bars_by_day: dict[date, list[MinuteBar]],
    news_time: datetime,
    calendar: TradeCalendar,
) -> np.ndarray:
    """Window selection + featurization + stacking in one step (unscaled)."""
    bars = select_trade_window(news_time, calendar, bars_by_day)
    return window_trade_data(build_minute_features(bars))
