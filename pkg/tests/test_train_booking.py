"""Booking tools: date formatting, paginated search, ticket booking."""

import json
import random
from datetime import datetime
from zoneinfo import ZoneInfo

import pytest

from casrun.toolkit import dispatch_tool_call
from casrun.train_booking import (
    FareTable,
    StationDataset,
    book_train_ticket,
    build_booking_registry,
    fixed_clock,
    format_search_results,
    generate_station_dataset,
    get_date_time,
    search_railway_station,
    time_band,
)
from casrun.types import ContextVariables, ToolCall

ROME = ZoneInfo("Europe/Rome")
OCT_CLOCK = fixed_clock(datetime(2024, 10, 30, 14, 30, tzinfo=ROME))
DEC_CLOCK = fixed_clock(datetime(2024, 12, 18, 15, 0, tzinfo=ROME))


@pytest.fixture(scope="module")
def stations(data_dir) -> StationDataset:
    return StationDataset.load(data_dir / "stations.txt")


@pytest.fixture(scope="module")
def fares(data_dir) -> FareTable:
    return FareTable.load(data_dir / "fares.json")


class TestGetDateTime:
    def test_reference_afternoon_moment(self):
        assert get_date_time(clock=OCT_CLOCK) == {
            "time": "2:30 in the afternoon",
            "date": "30th of October, 2024",
            "day_name": "Wednesday",
            "timezone_abbr": "CET",
        }

    def test_invalid_timezone_falls_back_silently(self):
        result = get_date_time("Not/AZone", clock=OCT_CLOCK)
        assert set(result) == {"time", "date", "day_name", "timezone_abbr"}
        assert result["timezone_abbr"] == "CET"

    def test_december_reference_day(self):
        result = get_date_time(clock=DEC_CLOCK)
        assert result["date"] == "18th of December, 2024"
        assert result["day_name"] == "Wednesday"

    def test_explicit_timezone_conversion(self):
        result = get_date_time("Asia/Tokyo", clock=OCT_CLOCK)
        assert result["timezone_abbr"] == "JST"
        assert result["time"] == "10:30 at night"

    def test_morning_and_night_phrases(self):
        morning = fixed_clock(datetime(2024, 10, 30, 9, 5, tzinfo=ROME))
        night = fixed_clock(datetime(2024, 10, 30, 0, 45, tzinfo=ROME))
        assert get_date_time(clock=morning)["time"] == "9:05 in the morning"
        assert get_date_time(clock=night)["time"] == "12:45 at night"


class TestSearch:
    def test_docstring_two_station_example(self):
        dataset = StationDataset(("Genova Principe", "Genova Brignole"))
        assert search_railway_station(dataset, "Genova", page=1) == (
            "Found 2 total results (Page 1 of 1):\n"
            "1. Genova Principe\n"
            "2. Genova Brignole"
        )

    def test_bundled_genova_page_two(self, stations):
        result = search_railway_station(stations, "Genova", page=2)
        assert result.startswith("Found 10 total results (Page 2 of 2):")
        assert "6. Genova Nervi" in result
        assert result.splitlines()[-1] == "10. Genova Campi"

    def test_bundled_roma_page_two_has_termini(self, stations):
        result = search_railway_station(stations, "Roma", page=2)
        assert "8. Roma Termini" in result
        assert "9. Roma Tiburtina" in result
        assert "10. Roma Ostiense" in result

    def test_no_matches(self, stations):
        assert search_railway_station(stations, "zzzz") == "Found 0 total results."

    def test_empty_query_matches_nothing(self, stations):
        assert search_railway_station(stations, "") == "Found 0 total results."

    def test_multi_word_query_requires_all_words(self, stations):
        result = search_railway_station(stations, "genova ne")
        assert "Genova Nervi" in result
        assert "Genova Brignole" not in result

    def test_page_past_the_end(self, stations):
        result = search_railway_station(stations, "Genova", page=5)
        assert result == "Found 10 total results (Page 5 of 2):\nNo results on this page."

    def test_twelve_matches_page_three(self):
        names = tuple(f"Stazione Prova {i:02d}" for i in range(1, 13))
        result = format_search_results(list(names), page=3)
        lines = result.splitlines()
        assert lines[0] == "Found 12 total results (Page 3 of 3):"
        assert lines[1:] == ["11. Stazione Prova 11", "12. Stazione Prova 12"]

    def test_statelessness_under_interleaving(self, stations):
        queries = [("Genova", 1), ("Roma", 2), ("Genova", 2), ("Milano", 1)]
        isolated = [search_railway_station(stations, q, p) for q, p in queries]
        interleaved = []
        for q, p in queries + list(reversed(queries)):
            interleaved.append(search_railway_station(stations, q, p))
        assert interleaved[: len(queries)] == isolated
        assert interleaved[len(queries):] == list(reversed(isolated))


def _matches_oracle(names, query):
    words = query.lower().split()
    if not words:
        return []
    return [n for n in names if all(w in n.lower() for w in words)]


def test_pagination_properties_randomized():
    rng = random.Random(99)
    for round_no in range(100):
        dataset = generate_station_dataset(rng.randrange(1, 60), seed=round_no)
        query = rng.choice(["a", "o", "sc", "Borgo", "Terme", "zzz", "borgo alto", ""])
        expected = _matches_oracle(dataset.names, query)
        n = len(expected)
        pages = (n + 4) // 5
        if n == 0:
            assert search_railway_station(dataset, query) == "Found 0 total results."
            continue
        collected = []
        for page in range(1, pages + 1):
            text = search_railway_station(dataset, query, page)
            header, *items = text.splitlines()
            assert header == f"Found {n} total results (Page {page} of {pages}):"
            for line in items:
                number, name = line.split(". ", 1)
                assert int(number) == len(collected) + 1
                collected.append(name)
        assert collected == expected


class TestTimeBand:
    @pytest.mark.parametrize(
        "hhmm,band",
        [("06:00", "morning"), ("11:59", "morning"), ("12:00", "afternoon"),
         ("18:30", "evening"), ("02:00", "night")],
    )
    def test_bands(self, hhmm, band):
        assert time_band(hhmm) == band


def _book(values, stations, fares, clock=DEC_CLOCK, seed=7):
    text, confirmed = book_train_ticket(
        values, dataset=stations, fares=fares, clock=clock, rng=random.Random(seed)
    )
    return json.loads(text), confirmed


GOOD_BOOKING = {
    "departure_city_station": "Genova Nervi",
    "destination_city_station": "Roma Termini",
    "departure_date": "2024-12-19",
    "departure_time": "06:00",
    "passenger_count": 1,
    "travel_class": "1st",
}


class TestBooking:
    def test_confirmed_booking_shape(self, stations, fares):
        data, confirmed = _book(GOOD_BOOKING, stations, fares)
        assert confirmed
        assert data["status"] == "confirmed"
        assert len(data["pnr"]) == 6 and data["pnr"].isalnum() and data["pnr"].isupper()
        assert len(data["control_code"]) == 6 and data["control_code"].isdigit()
        assert data["train_name"] == "Intercity 994"
        assert data["carriage"] == 4
        assert data["seat"] == "19D"
        assert data["ticket_price"] == 55.0
        assert data["total_amount"] == 95.0
        assert data["currency"] == "EUR"
        assert data["travel_class"] == "1st"

    def test_total_at_least_price_times_passengers(self, stations, fares):
        values = dict(GOOD_BOOKING, passenger_count=3)
        data, _ = _book(values, stations, fares)
        assert data["total_amount"] >= data["ticket_price"] * 3

    def test_deterministic_given_seed_and_clock(self, stations, fares):
        first, _ = _book(GOOD_BOOKING, stations, fares, seed=11)
        second, _ = _book(GOOD_BOOKING, stations, fares, seed=11)
        assert first == second

    def test_past_date_rejected(self, stations, fares):
        values = dict(GOOD_BOOKING, departure_date="2024-12-17")
        data, confirmed = _book(values, stations, fares)
        assert not confirmed
        assert data == {"status": "error", "reason": "departure date in the past"}

    def test_same_day_is_allowed(self, stations, fares):
        values = dict(GOOD_BOOKING, departure_date="2024-12-18")
        data, _ = _book(values, stations, fares)
        assert data["status"] == "confirmed"

    def test_zero_passengers_rejected(self, stations, fares):
        values = dict(GOOD_BOOKING, passenger_count=0)
        data, confirmed = _book(values, stations, fares)
        assert not confirmed
        assert data["status"] == "error"
        assert "passenger" in data["reason"]

    def test_malformed_date_rejected(self, stations, fares):
        values = dict(GOOD_BOOKING, departure_date="19/12/2024")
        data, _ = _book(values, stations, fares)
        assert data["status"] == "error"
        assert "YYYY-MM-DD" in data["reason"]

    def test_malformed_time_rejected(self, stations, fares):
        values = dict(GOOD_BOOKING, departure_time="6 del mattino")
        data, _ = _book(values, stations, fares)
        assert data["status"] == "error"

    def test_unknown_station_rejected(self, stations, fares):
        values = dict(GOOD_BOOKING, departure_city_station="Atlantide Centrale")
        data, _ = _book(values, stations, fares)
        assert data == {
            "status": "error",
            "reason": "unknown departure station: Atlantide Centrale",
        }

    def test_shorthand_travel_class_normalized(self, stations, fares):
        values = dict(GOOD_BOOKING, travel_class="1")
        data, _ = _book(values, stations, fares)
        assert data["travel_class"] == "1st"

    def test_return_leg_is_echoed(self, stations, fares):
        values = dict(GOOD_BOOKING, return_date="2024-12-22", return_time="18:30")
        data, _ = _book(values, stations, fares)
        assert data["return_date"] == "2024-12-22"
        assert data["return_time"] == "18:30"

    def test_unlisted_route_uses_default_fare(self, stations, fares):
        values = dict(
            GOOD_BOOKING,
            departure_city_station="Padova",
            destination_city_station="Trento",
        )
        data, _ = _book(values, stations, fares)
        assert data["status"] == "confirmed"
        assert data["train_name"] == "Intercity 581"


class TestRegistry:
    def test_registry_dispatch_roundtrip(self, stations, fares):
        registry = build_booking_registry(stations, fares, clock=DEC_CLOCK, seed=7)
        ctx = ContextVariables()
        result = dispatch_tool_call(
            registry, ToolCall.from_values("c1", "get_date_time"), ctx
        )
        assert not result.is_error
        assert "18th of December, 2024" in result.content

        result = dispatch_tool_call(
            registry,
            ToolCall.from_values("c2", "search_railway_station", query="Genova"),
            ctx,
        )
        assert result.content.startswith("Found 10 total results (Page 1 of 2):")

        result = dispatch_tool_call(
            registry,
            ToolCall.from_values("c3", "book_train_ticket", **GOOD_BOOKING),
            ctx,
        )
        assert json.loads(result.content)["status"] == "confirmed"
        assert result.ends_session

    def test_buy_alias_resolves(self, stations, fares):
        registry = build_booking_registry(stations, fares, clock=DEC_CLOCK, seed=7)
        result = dispatch_tool_call(
            registry,
            ToolCall.from_values("c4", "buy_train_ticket", **GOOD_BOOKING),
            ContextVariables(),
        )
        assert json.loads(result.content)["status"] == "confirmed"

    def test_failed_booking_does_not_end_session(self, stations, fares):
        registry = build_booking_registry(stations, fares, clock=DEC_CLOCK, seed=7)
        bad = dict(GOOD_BOOKING, passenger_count=0)
        result = dispatch_tool_call(
            registry,
            ToolCall.from_values("c5", "book_train_ticket", **bad),
            ContextVariables(),
        )
        assert not result.ends_session
        assert json.loads(result.content)["status"] == "error"

    def test_travel_class_enum_violation_in_band(self, stations, fares):
        registry = build_booking_registry(stations, fares, clock=DEC_CLOCK, seed=7)
        bad = dict(GOOD_BOOKING, travel_class="3rd")
        result = dispatch_tool_call(
            registry,
            ToolCall.from_values("c6", "book_train_ticket", **bad),
            ContextVariables(),
        )
        assert result.is_error
        assert "travel_class" in result.content
