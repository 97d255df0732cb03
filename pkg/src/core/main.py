"""
Toeplitz GOF Service
====================

JSON endpoints for closed-form thresholds, single tests and lag selection.
"""

import logging
import os
from typing import Any, Dict, Optional

from flask import Flask, jsonify, request
from flask_cors import CORS

from src.core.config import configure_logging
from src.toeplitz_testing.concentration import (
    ThresholdSpec,
    risk_bound,
    selector_threshold,
    separation_radius,
    theoretical_threshold,
)
from src.toeplitz_testing.errors import InvalidParameterError, NotPositiveDefiniteError
from src.toeplitz_testing.estimator import SampleSet, lag_functionals
from src.toeplitz_testing.procedures import run_test, select_from_stats

logger = logging.getLogger(__name__)

# Configuration
MAX_CONTENT_LENGTH = 16 * 1024 * 1024  # 16MB of JSON samples


def _optional(data: Dict[str, Any], key: str, cast) -> Optional[Any]:
    value = data.get(key)
    return None if value is None else cast(value)


def _samples(data: Dict[str, Any]) -> SampleSet:
    return SampleSet(data["data"])


def create_app() -> Flask:
    app = Flask(__name__)
    origins = os.getenv("CORS_ORIGINS", "*").split(",")
    CORS(app, origins=origins, methods=["GET", "POST"])
    app.config["MAX_CONTENT_LENGTH"] = MAX_CONTENT_LENGTH

    # -------------------------------
    # Endpoint: Health check
    # -------------------------------
    @app.route("/health", methods=["GET"])
    def health():
        return jsonify({"status": "ok"})

    # -------------------------------
    # Endpoint: Closed-form thresholds
    # -------------------------------
    @app.route("/thresholds", methods=["POST"])
    def thresholds_endpoint():
        try:
            data = request.get_json(silent=True)
            if not data or "kind" not in data:
                return jsonify({"error": "No test kind provided"}), 400
            spec = ThresholdSpec(
                kind=data["kind"],
                n=int(data["n"]),
                p=int(data["p"]),
                S=int(data["S"]),
                s=_optional(data, "s", int),
                u=_optional(data, "u", float),
                K=float(data.get("K", 0.5)),
            )
            return jsonify({
                "kind": spec.kind,
                "u": spec.u,
                "threshold": theoretical_threshold(spec),
                "separation_radius": separation_radius(spec) if spec.s is not None else None,
                "risk_bound": risk_bound(spec, one_sided_selector=bool(data.get("one_sided", False))),
            })
        except (KeyError, TypeError) as e:
            return jsonify({"error": f"Missing or malformed field: {e}"}), 400
        except InvalidParameterError as e:
            logger.warning(f"Rejected thresholds request: {e}")
            return jsonify({"error": str(e)}), 422
        except ValueError as e:
            return jsonify({"error": f"Malformed value: {e}"}), 400
        except Exception as e:
            logger.error(f"ERROR in thresholds_endpoint: {str(e)}")
            return jsonify({"error": f"Error computing thresholds: {str(e)}"}), 500

    # -------------------------------
    # Endpoint: Run one test
    # -------------------------------
    @app.route("/test", methods=["POST"])
    def test_endpoint():
        try:
            data = request.get_json(silent=True)
            if not data or "kind" not in data:
                return jsonify({"error": "No test kind provided"}), 400
            samples = _samples(data)
            S = int(data["S"])
            s = _optional(data, "s", int)
            if data.get("threshold") is not None:
                threshold, source = float(data["threshold"]), "given"
            else:
                spec = ThresholdSpec(data["kind"], samples.n, samples.p, S, s, _optional(data, "u", float))
                threshold, source = theoretical_threshold(spec), "theoretical"
            outcome = run_test(data["kind"], samples, S, threshold, s, source)
            logger.info(outcome.summary())
            return jsonify({
                "kind": outcome.kind,
                "statistic": outcome.statistic,
                "threshold": outcome.threshold,
                "reject": outcome.reject,
                "threshold_source": outcome.threshold_source,
                "s": outcome.s,
            })
        except (KeyError, TypeError) as e:
            return jsonify({"error": f"Missing or malformed field: {e}"}), 400
        except (InvalidParameterError, NotPositiveDefiniteError) as e:
            logger.warning(f"Rejected test request: {e}")
            return jsonify({"error": str(e)}), 422
        except ValueError as e:
            return jsonify({"error": f"Malformed value: {e}"}), 400
        except Exception as e:
            logger.error(f"ERROR in test_endpoint: {str(e)}")
            return jsonify({"error": f"Error running test: {str(e)}"}), 500

    # -------------------------------
    # Endpoint: Lag selection
    # -------------------------------
    @app.route("/select", methods=["POST"])
    def select_endpoint():
        try:
            data = request.get_json(silent=True)
            if not data:
                return jsonify({"error": "No request body provided"}), 400
            samples = _samples(data)
            S = int(data["S"])
            tau = _optional(data, "tau", float)
            if tau is None:
                if data.get("s") is None:
                    return jsonify({"error": "Provide tau or the sparsity s"}), 400
                tau = selector_threshold(samples.n, samples.p, S, int(data["s"]), float(data.get("u", 2.0)))
            stats = lag_functionals(samples, S)
            result = select_from_stats(stats, tau, bool(data.get("one_sided", False)))
            return jsonify({
                "tau": result.tau,
                "one_sided": result.one_sided,
                "xi": [float(value) for value in stats.xi],
                "eta_hat": [int(value) for value in result.eta_hat],
                "selected_lags": result.selected_lags(),
            })
        except (KeyError, TypeError) as e:
            return jsonify({"error": f"Missing or malformed field: {e}"}), 400
        except InvalidParameterError as e:
            logger.warning(f"Rejected select request: {e}")
            return jsonify({"error": str(e)}), 422
        except ValueError as e:
            return jsonify({"error": f"Malformed value: {e}"}), 400
        except Exception as e:
            logger.error(f"ERROR in select_endpoint: {str(e)}")
            return jsonify({"error": f"Error selecting lags: {str(e)}"}), 500

    return app


app = create_app()

# -------------------------------
# Run the Flask App
# -------------------------------
if __name__ == "__main__":
    configure_logging()
    logger.info("Starting toeplitz-gof service...")
    app.run(
        debug=os.getenv("DEBUG", "false").lower() == "true",
        host=os.getenv("HOST", "0.0.0.0"),
        port=int(os.getenv("PORT", "5000")),
    )
