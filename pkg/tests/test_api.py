import pytest
from fastapi.testclient import TestClient

from app.main import app
from app.models.schemas import ValidationSummary
from app.services.validation_service import ValidationService

API = "/api/v1"
SMALL_RUN = {"system": {"example": 1, "n": 12}, "c0": [3, 9], "g0": [5, 5], "max_eval": 200}


@pytest.fixture(scope="module")
def client():
    with TestClient(app) as c:
        yield c


def test_root_and_health(client):
    root = client.get("/")
    assert root.status_code == 200
    assert root.json()["name"] == "DampOpt"
    health = client.get(f"{API}/health")
    assert health.status_code == 200
    assert health.json()["status"] == "healthy"


def test_build_system(client):
    response = client.post(f"{API}/systems", json={"example": 1, "n": 12})
    assert response.status_code == 200
    body = response.json()
    assert body["success"] is True
    assert body["system"]["n"] == 12
    assert body["system"]["label"] == "example1-n12"


def test_build_system_validation_error(client):
    response = client.post(f"{API}/systems", json={"example": 1, "n": 7})
    assert response.status_code == 422
    body = response.json()
    assert body["success"] is False
    assert body["error"] == "Validation error"
    assert body["details"]


def test_build_system_above_scale_is_rejected(client):
    response = client.post(f"{API}/systems", json={"example": 1, "n": 600})
    assert response.status_code == 400
    assert "FULL_SCALE_N" in response.json()["error"]


def test_run_and_compare(client):
    response = client.post(f"{API}/runs", json=SMALL_RUN)
    assert response.status_code == 200
    report = response.json()["report"]
    assert report["method"] == "full"
    assert len(report["positions"]) == 2
    assert report["termination_reason"] == "opt-converged"

    response = client.post(f"{API}/compare", json={"reports": [report]})
    assert response.status_code == 200
    (table,) = response.json()["tables"]
    assert table["baseline"] == "full-positions"
    assert table["columns"][0]["acceleration"] == pytest.approx(1.0)


def test_run_rejects_file_outputs(client):
    response = client.post(f"{API}/runs", json={**SMALL_RUN, "output": "results"})
    assert response.status_code == 400
    assert response.json()["success"] is False


def test_run_rejects_positions_outside_system(client):
    response = client.post(f"{API}/runs", json={**SMALL_RUN, "c0": [3, 30]})
    assert response.status_code == 400
    assert "positions" in response.json()["error"]


def test_run_rejects_mismatched_gains(client):
    response = client.post(f"{API}/runs", json={**SMALL_RUN, "g0": [5]})
    assert response.status_code == 422


def test_validate(client, monkeypatch):
    monkeypatch.setattr(
        ValidationService, "validate", staticmethod(lambda seed=0: ValidationSummary(passed=True, properties=[])),
    )
    response = client.post(f"{API}/validate", json={"seed": 3})
    assert response.status_code == 200
    assert response.json()["summary"]["passed"] is True
