"""Train booking tools: date/time lookup, paginated station search and
ticket booking.

All tools are pure given (dataset, fare table, clock, RNG seed): search is
a stateless function taking the page number as an argument, and booking
draws train/seat/price from a deterministic fixture table, so interleaved
sessions can never affect each other.
"""

from __future__ import annotations

import json
import random
from dataclasses import dataclass
from datetime import datetime, time as dtime
from pathlib import Path
from typing import Any, Callable, Mapping
from zoneinfo import ZoneInfo, ZoneInfoNotFoundError

from casrun.toolkit import ToolRegistry
from casrun.types import ContextVariables, ParamSpec, ToolResult, ToolSpec, json_compact

DEFAULT_PAGE_SIZE = 5
TRAVEL_CLASSES = ("1st", "2nd", "1", "2")

Clock = Callable[[], datetime]


def system_clock() -> datetime:
    """Aware current time in the local timezone."""
    return datetime.now().astimezone()


def fixed_clock(moment: datetime) -> Clock:
    """A clock frozen at ``moment`` (must be timezone-aware)."""
    if moment.tzinfo is None:
        raise ValueError("fixed clock requires an aware datetime")
    return lambda: moment


# ---------------------------------------------------------------------------
# Station dataset and paginated search


@dataclass(frozen=True)
class StationDataset:
    """Ordered, duplicate-free list of station names. Order is load order,
    which keeps pagination deterministic."""

    names: tuple[str, ...]

    def __post_init__(self) -> None:
        if not isinstance(self.names, tuple):
            object.__setattr__(self, "names", tuple(self.names))
        if len(set(self.names)) != len(self.names):
            raise ValueError("station names must be unique")

    @classmethod
    def load(cls, path: str | Path) -> "StationDataset":
        lines = Path(path).read_text(encoding="utf-8").splitlines()
        return cls(tuple(line.strip() for line in lines if line.strip()))

    def matches(self, query: str) -> list[str]:
        """Case-insensitive match: every whitespace-separated query word
        must appear as a substring of the name. An empty query matches
        nothing."""
        words = query.lower().split()
        if not words:
            return []
        return [
            name
            for name in self.names
            if all(word in name.lower() for word in words)
        ]

    def __contains__(self, name: str) -> bool:
        return any(existing.lower() == name.strip().lower() for existing in self.names)


def generate_station_dataset(count: int, seed: int = 0) -> StationDataset:
    """Synthetic dataset for stress tests simulating thousands of entries."""
    rng = random.Random(seed)
    cities = [
        "Albano", "Borgo", "Castello", "Dolceacqua", "Erba", "Falconara",
        "Gubbio", "Imola", "Jesi", "Lanciano", "Macerata", "Norcia",
        "Orvieto", "Pistoia", "Quarto", "Rovigo", "Sondrio", "Teramo",
        "Udine", "Viterbo",
    ]
    suffixes = ["Centrale", "Nord", "Sud", "Est", "Ovest", "Porta Mare",
                "San Marco", "Borgo Alto", "Scalo", "Terme"]
    names: list[str] = []
    seen: set[str] = set()
    serial = 1
    while len(names) < count:
        name = f"{rng.choice(cities)} {rng.choice(suffixes)}"
        if name in seen:
            name = f"{name} {serial}"
            serial += 1
        seen.add(name)
        names.append(name)
    return StationDataset(tuple(names))


def format_search_results(
    matches: list[str], page: int, page_size: int = DEFAULT_PAGE_SIZE
) -> str:
    """Render one result page with global numbering.

    Zero matches produce ``Found 0 total results.``; a page past the end
    keeps the header and notes the empty page so the model can renavigate.
    """
    total = len(matches)
    if total == 0:
        return "Found 0 total results."
    page = max(1, page)
    total_pages = (total + page_size - 1) // page_size
    header = f"Found {total} total results (Page {page} of {total_pages}):"
    if page > total_pages:
        return header + "\nNo results on this page."
    start = (page - 1) * page_size
    items = [
        f"{start + offset + 1}. {name}"
        for offset, name in enumerate(matches[start:start + page_size])
    ]
    return "\n".join([header] + items)


def search_railway_station(
    dataset: StationDataset,
    query: str,
    page: int = 1,
    page_size: int = DEFAULT_PAGE_SIZE,
) -> str:
    """Perform a search for railway station names based on a query and
    display results in a paginated format.

    Stateless: the page number is passed as an argument, so no call affects
    any other and interleaved call sequences are reproducible.
    """
    return format_search_results(dataset.matches(query), page, page_size)


# ---------------------------------------------------------------------------
# Date/time handling


_ORDINAL_EXCEPTIONS = {11: "th", 12: "th", 13: "th"}
_ORDINAL_SUFFIXES = {1: "st", 2: "nd", 3: "rd"}


def _ordinal(day: int) -> str:
    suffix = _ORDINAL_EXCEPTIONS.get(day % 100) or _ORDINAL_SUFFIXES.get(day % 10, "th")
    return f"{day}{suffix}"


def _day_part(hour: int) -> str:
    if 5 <= hour <= 11:
        return "in the morning"
    if 12 <= hour <= 16:
        return "in the afternoon"
    if 17 <= hour <= 20:
        return "in the evening"
    return "at night"


def get_date_time(timezone: str | None = None, *, clock: Clock = system_clock) -> dict[str, str]:
    """Convert the current moment into human-friendly datetime strings.

    An invalid or missing timezone silently falls back to the clock's own
    timezone; no exceptions are raised.
    """
    now = clock()
    if timezone:
        try:
            now = now.astimezone(ZoneInfo(timezone))
        except (ZoneInfoNotFoundError, ValueError, KeyError):
            pass
    hour12 = now.hour % 12 or 12
    return {
        "time": f"{hour12}:{now.minute:02d} {_day_part(now.hour)}",
        "date": f"{_ordinal(now.day)} of {now.strftime('%B')}, {now.year}",
        "day_name": now.strftime("%A"),
        "timezone_abbr": now.tzname() or "",
    }


# ---------------------------------------------------------------------------
# Booking


class BookingValidationError(ValueError):
    """A booking request violates a business rule; ``reason`` is the
    user-facing explanation carried back in the error JSON."""

    def __init__(self, reason: str):
        super().__init__(reason)
        self.reason = reason


@dataclass(frozen=True)
class BookingRequest:
    """Validated booking parameters."""

    departure_city_station: str
    destination_city_station: str
    departure_date: str
    departure_time: str
    passenger_count: int
    travel_class: str
    return_date: str | None = None
    return_time: str | None = None


def _parse_date(value: str, label: str) -> datetime:
    try:
        return datetime.strptime(value, "%Y-%m-%d")
    except (TypeError, ValueError):
        raise BookingValidationError(f"malformed {label}: expected YYYY-MM-DD")


def _parse_time(value: str, label: str) -> dtime:
    try:
        return datetime.strptime(value, "%H:%M").time()
    except (TypeError, ValueError):
        raise BookingValidationError(f"malformed {label}: expected HH:MM")


def normalize_travel_class(value: str) -> str:
    """Accept '1st'/'2nd' and the shorthand '1'/'2'; canonical form is
    '1st'/'2nd'."""
    if value in ("1st", "1"):
        return "1st"
    if value in ("2nd", "2"):
        return "2nd"
    raise BookingValidationError("travel class must be '1st' or '2nd'")


def validate_booking(
    values: Mapping[str, Any], dataset: StationDataset, clock: Clock
) -> BookingRequest:
    """Validate raw booking arguments into a typed request or raise
    BookingValidationError with the reason."""
    departure_date = _parse_date(str(values.get("departure_date", "")), "departure date")
    _parse_time(str(values.get("departure_time", "")), "departure time")
    return_date = values.get("return_date")
    return_time = values.get("return_time")
    if return_date is not None:
        _parse_date(str(return_date), "return date")
    if return_time is not None:
        _parse_time(str(return_time), "return time")

    passenger_count = values.get("passenger_count", 0)
    if not isinstance(passenger_count, int) or passenger_count < 1:
        raise BookingValidationError("passenger count must be at least 1")

    travel_class = normalize_travel_class(str(values.get("travel_class", "")))

    departure = str(values.get("departure_city_station", "")).strip()
    destination = str(values.get("destination_city_station", "")).strip()
    if departure not in dataset:
        raise BookingValidationError(f"unknown departure station: {departure}")
    if destination not in dataset:
        raise BookingValidationError(f"unknown destination station: {destination}")

    today = clock().date()
    if departure_date.date() < today:
        raise BookingValidationError("departure date in the past")

    return BookingRequest(
        departure_city_station=departure,
        destination_city_station=destination,
        departure_date=str(values["departure_date"]),
        departure_time=str(values["departure_time"]),
        passenger_count=passenger_count,
        travel_class=travel_class,
        return_date=str(return_date) if return_date is not None else None,
        return_time=str(return_time) if return_time is not None else None,
    )


@dataclass(frozen=True)
class FareEntry:
    """One fixture row: train identity, seat pattern and pricing for a
    (route, time band) key."""

    train_name: str
    departure: str
    arrival: str
    carriage: int
    seat_pattern: str
    price: float
    fee: float


class FareTable:
    """Deterministic fare lookup keyed by ``{departure}->{destination}|{band}``
    with a ``*`` default row."""

    def __init__(self, entries: Mapping[str, FareEntry]):
        if "*" not in entries:
            raise ValueError("fare table requires a '*' default entry")
        self._entries = dict(entries)

    @classmethod
    def load(cls, path: str | Path) -> "FareTable":
        raw = json.loads(Path(path).read_text(encoding="utf-8"))
        entries = {
            key: FareEntry(
                train_name=row["train_name"],
                departure=row["departure"],
                arrival=row["arrival"],
                carriage=int(row["carriage"]),
                seat_pattern=row["seat_pattern"],
                price=float(row["price"]),
                fee=float(row["fee"]),
            )
            for key, row in raw.items()
        }
        return cls(entries)

    def lookup(self, departure: str, destination: str, band: str) -> FareEntry:
        key = f"{departure}->{destination}|{band}"
        return self._entries.get(key, self._entries["*"])


def time_band(departure_time: str) -> str:
    hour = _parse_time(departure_time, "departure time").hour
    if 5 <= hour <= 11:
        return "morning"
    if 12 <= hour <= 17:
        return "afternoon"
    if 18 <= hour <= 23:
        return "evening"
    return "night"


_PNR_ALPHABET = "ABCDEFGHIJKLMNOPQRSTUVWXYZ0123456789"
_SEAT_LETTERS = "ABCDEF"


def _expand_seat(pattern: str, rng: random.Random) -> str:
    """Expand a seat pattern: '#' draws a digit, '?' draws a seat letter;
    any other character is literal."""
    out = []
    for ch in pattern:
        if ch == "#":
            out.append(str(rng.randrange(10)))
        elif ch == "?":
            out.append(rng.choice(_SEAT_LETTERS))
        else:
            out.append(ch)
    return "".join(out)


def book_train_ticket(
    values: Mapping[str, Any],
    *,
    dataset: StationDataset,
    fares: FareTable,
    clock: Clock,
    rng: random.Random,
) -> tuple[str, bool]:
    """Book a ticket; returns (JSON text, confirmed flag).

    Validation failures come back in-band as ``{"status": "error", ...}``
    so the model can explain and recover. With a fixed seed and clock the
    confirmation is fully deterministic.
    """
    try:
        request = validate_booking(values, dataset, clock)
    except BookingValidationError as exc:
        return json_compact({"status": "error", "reason": exc.reason}), False

    fare = fares.lookup(
        request.departure_city_station,
        request.destination_city_station,
        time_band(request.departure_time),
    )
    pnr = "".join(rng.choice(_PNR_ALPHABET) for _ in range(6))
    control_code = f"{rng.randrange(10**6):06d}"
    ticket_price = round(fare.price, 2)
    total_amount = round(fare.price * request.passenger_count + fare.fee, 2)

    confirmation: dict[str, Any] = {
        "status": "confirmed",
        "pnr": pnr,
        "control_code": control_code,
        "departure_city_station": request.departure_city_station,
        "destination_city_station": request.destination_city_station,
        "departure_date": request.departure_date,
        "departure_time": request.departure_time,
    }
    if request.return_date is not None:
        confirmation["return_date"] = request.return_date
    if request.return_time is not None:
        confirmation["return_time"] = request.return_time
    confirmation.update(
        {
            "passenger_count": request.passenger_count,
            "travel_class": request.travel_class,
            "train_name": fare.train_name,
            "carriage": fare.carriage,
            "seat": _expand_seat(fare.seat_pattern, rng),
            "ticket_price": ticket_price,
            "total_amount": total_amount,
            "currency": "EUR",
        }
    )
    return json_compact(confirmation), True


# ---------------------------------------------------------------------------
# Tool declarations and registry wiring


GET_DATE_TIME_SPEC = ToolSpec(
    name="get_date_time",
    description=(
        "Convert current moment into human-friendly datetime strings with "
        "timezone support."
    ),
    parameters=(
        ParamSpec(
            "timezone",
            "string",
            "IANA timezone string (e.g., 'Europe/Rome', 'Asia/Tokyo'). "
            "Uses system default if None/invalid.",
        ),
    ),
    returns_description=(
        "Mapping with keys time, date, day_name and timezone_abbr; all "
        "values are formatted strings. No exceptions raised - silent "
        "fallback to system timezone."
    ),
)

SEARCH_STATION_SPEC = ToolSpec(
    name="search_railway_station",
    description=(
        "Perform a search for railway station names based on a query and "
        "display results in a paginated format."
    ),
    parameters=(
        ParamSpec(
            "query",
            "string",
            "The search query, consisting of one or more space-separated words.",
            required=True,
        ),
        ParamSpec(
            "page",
            "integer",
            "The current page number to display (1-based indexing). Defaults to 1.",
        ),
    ),
    returns_description=(
        "A formatted string displaying the search results for the specified "
        "page, including pagination details."
    ),
)

_BOOKING_PARAMS = (
    ParamSpec(
        "departure_city_station",
        "string",
        "The name of the station where the journey begins.",
        required=True,
    ),
    ParamSpec(
        "destination_city_station",
        "string",
        "The name of the station where the journey ends.",
        required=True,
    ),
    ParamSpec(
        "departure_date", "string", "The departure date in 'YYYY-MM-DD' format.",
        required=True,
    ),
    ParamSpec(
        "departure_time", "string", "The desired departure time in 'HH:MM' format.",
        required=True,
    ),
    ParamSpec(
        "passenger_count", "integer", "The number of passengers.", required=True
    ),
    ParamSpec(
        "travel_class",
        "string",
        "The travel class: '1st' for first class and '2nd' for second class.",
        required=True,
        enum=TRAVEL_CLASSES,
    ),
    ParamSpec(
        "return_date",
        "string",
        "The return date in 'YYYY-MM-DD' format. Omit for one-way trips.",
    ),
    ParamSpec(
        "return_time", "string", "The desired return time in 'HH:MM' format."
    ),
)

BOOK_TICKET_SPEC = ToolSpec(
    name="book_train_ticket",
    description=(
        "Books a train ticket with the specified details and returns a "
        "JSON-formatted booking confirmation or error message."
    ),
    parameters=_BOOKING_PARAMS,
    returns_description=(
        "A JSON-formatted string containing booking confirmation details or "
        "an error message if the booking fails."
    ),
)

# Older clients call the booking function by this name; both resolve to the
# same handler.
BUY_TICKET_ALIAS_SPEC = ToolSpec(
    name="buy_train_ticket",
    description=BOOK_TICKET_SPEC.description,
    parameters=_BOOKING_PARAMS,
    returns_description=BOOK_TICKET_SPEC.returns_description,
)


def build_booking_registry(
    dataset: StationDataset,
    fares: FareTable,
    *,
    clock: Clock = system_clock,
    seed: int = 0,
    page_size: int = DEFAULT_PAGE_SIZE,
) -> ToolRegistry:
    """Assemble the booking tool registry over the given fixtures."""
    rng = random.Random(seed)
    registry = ToolRegistry()

    def handle_get_date_time(values: dict, ctx: ContextVariables) -> str:
        payload = get_date_time(values.get("timezone"), clock=clock)
        return json_compact(payload)

    def handle_search(values: dict, ctx: ContextVariables) -> str:
        return search_railway_station(
            dataset, values.get("query", ""), values.get("page", 1), page_size
        )

    def handle_book(values: dict, ctx: ContextVariables) -> ToolResult:
        content, confirmed = book_train_ticket(
            values, dataset=dataset, fares=fares, clock=clock, rng=rng
        )
        return ToolResult(
            tool_call_id="", content=content, ends_session=confirmed
        )

    registry.register(GET_DATE_TIME_SPEC, handle_get_date_time)
    registry.register(SEARCH_STATION_SPEC, handle_search)
    registry.register(BOOK_TICKET_SPEC, handle_book)
    registry.register(BUY_TICKET_ALIAS_SPEC, handle_book)
    return registry
