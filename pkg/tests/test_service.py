import numpy as np
import pytest


@pytest.fixture
def payload(rng):
    return rng.standard_normal((15, 10)).round(6).tolist()


def test_health(client):
    response = client.get("/health")
    assert response.status_code == 200
    assert response.get_json() == {"status": "ok"}


def test_thresholds(client):
    response = client.post("/thresholds", json={"kind": "ms+", "n": 100, "p": 100, "S": 10, "u": 4})
    assert response.status_code == 200
    body = response.get_json()
    assert body["threshold"] == pytest.approx(0.0666667, abs=1e-6)
    assert body["separation_radius"] is None
    assert body["risk_bound"] == pytest.approx(2 * np.exp(-1))


def test_selector_thresholds(client):
    response = client.post("/thresholds", json={"kind": "selector", "n": 100, "p": 100, "S": 10, "s": 2, "u": 2})
    assert response.get_json()["threshold"] == pytest.approx(0.075821, abs=1e-6)


@pytest.mark.parametrize(
    "body, status",
    [
        ({"n": 100, "p": 100, "S": 10}, 400),
        ({"kind": "ms", "n": 100, "p": 100}, 400),
        ({"kind": "ms", "n": "many", "p": 100, "S": 10}, 400),
        ({"kind": "hs", "n": 100, "p": 100, "S": 10, "s": 11}, 422),
        ({"kind": "lrt", "n": 100, "p": 100, "S": 10}, 422),
    ],
)
def test_thresholds_rejects_bad_requests(client, body, status):
    response = client.post("/thresholds", json=body)
    assert response.status_code == status
    assert "error" in response.get_json()


def test_run_scan_test(client, payload):
    response = client.post("/test", json={"kind": "hs", "data": payload, "S": 3, "s": 2})
    assert response.status_code == 200
    body = response.get_json()
    assert body["kind"] == "hs"
    assert body["s"] == 2
    assert body["threshold_source"] == "theoretical"
    assert body["reject"] == (body["statistic"] >= body["threshold"])


def test_run_test_with_given_threshold(client, payload):
    response = client.post("/test", json={"kind": "ms+", "data": payload, "S": 3, "threshold": 1000})
    body = response.get_json()
    assert body["threshold_source"] == "given"
    assert body["reject"] is False


def test_run_test_validation(client, payload):
    assert client.post("/test", json={"kind": "ms", "S": 3}).status_code == 400
    assert client.post("/test", json={"kind": "ms", "data": payload, "S": 5}).status_code == 422
    assert client.post("/test", json={"kind": "hs", "data": payload, "S": 3}).status_code == 422


def test_select(client, payload):
    response = client.post("/select", json={"data": payload, "S": 4, "tau": 1000})
    assert response.status_code == 200
    body = response.get_json()
    assert body["eta_hat"] == [0, 0, 0, 0]
    assert body["selected_lags"] == []
    assert len(body["xi"]) == 4
    assert body["one_sided"] is False


def test_select_derives_tau_from_sparsity(client, payload):
    response = client.post("/select", json={"data": payload, "S": 4, "s": 1})
    assert response.status_code == 200
    assert response.get_json()["tau"] > 0
    assert client.post("/select", json={"data": payload, "S": 4}).status_code == 400
