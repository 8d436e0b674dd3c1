"""Synthetic CTAF traffic scenarios for KHAF and a frozen chat-model
safety-classification benchmark harness."""

from .airspace import (
    Aircraft,
    AdsbState,
    Advisory,
    Airfield,
    HazardType,
    KHAF,
    PatternPhase,
    PositionEvent,
    SafetyLabel3,
    SafetyLabelBinary,
    Scenario,
    collapse_to_binary,
    great_circle_nm,
    label_scenario,
)
from .metar import Metar, FlightCategory, decode_metar, emit_metar, flight_category, parse_metar
from .scenario_gen import Dataset, GenConfig, build_dataset, load_dataset, save_dataset
from .transcript import RadioCall, SrtCue, Transcript, emit_srt, nato_spell, parse_radio_call, parse_srt, validate_timing

__version__ = "0.1.0"
