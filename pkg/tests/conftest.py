from __future__ import annotations

import pytest

from ctafbench.llm_eval import ModelEndpoint, make_oracle_transport
from ctafbench.scenario_gen import Dataset, GenConfig, build_dataset

S003_METAR = "KHAF 142135Z AUTO 18005KT 5SM -BR FEW010 BKN020 18/16 A2999 RMK AO2"
S003_DECODED = (
    "Marginal VFR — 5 SM visibility in mist, broken ceiling at 2,000 ft, "
    "wind 180° at 5 kt, 18°C / dewpoint 16°C"
)


@pytest.fixture(scope="session")
def small_dataset() -> Dataset:
    cfg = GenConfig(seed=7, n_scenarios=24,
                    class_targets={"nominal": 8, "warning": 8, "hazard": 8})
    return build_dataset(cfg)


@pytest.fixture(scope="session")
def full_dataset() -> Dataset:
    return build_dataset(GenConfig())


def gold_map(ds: Dataset) -> dict[str, dict[str, str]]:
    return {
        s.id: {"binary": s.label_binary.value, "three_class": s.label3.value}
        for s in ds.scenarios
    }


@pytest.fixture
def oracle_endpoint() -> ModelEndpoint:
    return ModelEndpoint(name="oracle", kind="mock-oracle",
                         supports_logprobs=True, max_parallel=4)


@pytest.fixture
def oracle_transport(small_dataset):
    return make_oracle_transport(gold_map(small_dataset), error_rate=0.0)


def no_sleep(_: float) -> None:
    return None
