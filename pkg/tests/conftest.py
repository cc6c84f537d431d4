from pathlib import Path

import pytest

from atlas.config import AtlasConfig
from atlas.gateway import ModelGateway
from atlas.ingestion import CorpusStore
from atlas.orchestrator import Orchestrator
from atlas.taxonomy import default_taxonomy

FIXTURES = Path(__file__).parent / "fixtures"
CORPUS = FIXTURES / "corpus"


@pytest.fixture(scope="session")
def taxonomy():
    return default_taxonomy()


@pytest.fixture()
def config():
    return AtlasConfig()


@pytest.fixture()
def gateway(taxonomy, config):
    return ModelGateway(taxonomy, config)


def build_fixture_store(taxonomy, gateway) -> CorpusStore:
    store = CorpusStore(taxonomy=taxonomy)
    store.ingest_videos(CORPUS / "videos.jsonl")
    store.ingest_captions(CORPUS / "captions.jsonl", gateway=gateway)
    store.ingest_detections(CORPUS / "detections.jsonl")
    store.ingest_masks(CORPUS / "masks_cam-a.json")
    store.ingest_masks(CORPUS / "masks_cam-b.json")
    return store


@pytest.fixture()
def store(taxonomy, gateway):
    return build_fixture_store(taxonomy, gateway)


@pytest.fixture()
def orchestrator(store, gateway, config):
    return Orchestrator(store, gateway, config)
