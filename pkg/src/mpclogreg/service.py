"""HTTP front of the training library.

Every command-line feature is a POST endpoint here; the command line is a
thin client of this app (in-process by default, over the network with a
running server). Handlers are stateless: each request loads or generates
its data, runs, and returns plain JSON built from the report helpers.
"""

from pathlib import Path
from typing import List, Optional

import numpy as np
from fastapi import FastAPI
from fastapi.exceptions import RequestValidationError
from fastapi.responses import JSONResponse
from pydantic import BaseModel, Field
from typing_extensions import Literal

from . import __version__
from .data import (
    DATASETS,
    DEFAULT_DATA_DIR,
    Dataset,
    dataset_path,
    gen_synthetic,
    load_csv,
    load_named,
    split_train_test,
    standardize,
)
from .errors import DataError, ProtocolError, UsageError
from .reports import (
    comm_report,
    evaluate_model,
    reproduce_coefficients,
    reproduce_metrics,
    run_bench,
    train_protocol,
    training_report,
)


class SyntheticSpec(BaseModel):
    """Parameters for a generated dataset (logistic labels, seeded)."""

    records: int = Field(200, ge=2)
    features: int = Field(6, ge=1)
    seed: int = 0
    noise: float = Field(0.0, ge=0.0)


class DataSource(BaseModel):
    """Where the records come from: a CSV path, a registered dataset name,
    or the synthetic generator. Exactly one of data/synthetic is required."""

    data: Optional[str] = None
    data_dir: Optional[str] = None
    synthetic: Optional[SyntheticSpec] = None


class TrainRequest(DataSource):
    protocol: str = "olr"
    sigmoid: Optional[str] = None
    sigmoid_degree: int = 3
    iters: int = 15
    inv_iters: int = 24
    frac_bits: int = 16
    seed: int = 0
    parties: Optional[int] = None
    owners: Optional[int] = None
    split: float = Field(0.25, ge=0.0, lt=1.0)
    standardize: bool = True


class BenchRequest(BaseModel):
    mode: Literal["records", "features"] = "records"
    sizes: List[int] = [500, 1500, 4500]
    fixed: int = 10
    protocols: List[str] = ["olr", "bmpc", "cmpc"]
    repeats: int = 10
    iters: int = 15
    seed: int = 0


class CommRequest(DataSource):
    protocol: str = "cmpc"
    sigmoid: Optional[str] = None
    sigmoid_degree: int = 3
    iters: int = 15
    inv_iters: int = 24
    frac_bits: int = 16
    seed: int = 0
    standardize: bool = True


class ReproduceRequest(BaseModel):
    which: Literal["coefficients", "metrics", "both"] = "both"
    data_dir: Optional[str] = None
    iters: int = 15
    inv_iters: int = 24
    seed: int = 0
    standardize: bool = True
    datasets: List[str] = ["pima", "pcs", "lbw", "uis"]
    degrees: List[int] = [3, 5, 7]
    split: float = Field(0.25, gt=0.0, lt=1.0)


def _load_source(req: DataSource) -> Dataset:
    if (req.data is None) == (req.synthetic is None):
        raise UsageError("provide exactly one data source: a data path/name or a synthetic spec")
    if req.synthetic is not None:
        s = req.synthetic
        return gen_synthetic(s.records, s.features, seed=s.seed, noise=s.noise)
    if req.data in DATASETS:
        return load_named(req.data, req.data_dir)
    return load_csv(Path(req.data))


def create_app() -> FastAPI:
    app = FastAPI(title="mpclogreg", version=__version__)

    def _payload(kind: str, exc: Exception, status: int) -> JSONResponse:
        return JSONResponse(status_code=status, content={"error_type": kind, "message": str(exc)})

    @app.exception_handler(UsageError)
    def usage_error(request, exc):
        return _payload("usage", exc, 400)

    @app.exception_handler(RequestValidationError)
    def validation_error(request, exc):
        parts = [
            f"{'.'.join(str(p) for p in err['loc'])}: {err['msg']}" for err in exc.errors()
        ]
        return _payload("usage", "; ".join(parts), 400)

    @app.exception_handler(DataError)
    def data_error(request, exc):
        return _payload("data", exc, 422)

    @app.exception_handler(ProtocolError)
    def protocol_error(request, exc):
        return _payload("protocol", exc, 500)

    @app.get("/health")
    def health():
        return {"status": "ok", "version": __version__}

    @app.get("/datasets")
    def datasets(data_dir: Optional[str] = None):
        base = DEFAULT_DATA_DIR if data_dir is None else Path(data_dir)
        rows = []
        for info in DATASETS.values():
            path = dataset_path(info.name, data_dir)
            rows.append(
                {
                    "name": info.name,
                    "file": str(path),
                    "present": path.exists(),
                    "expected_records": info.n_records,
                    "n_features": info.n_features,
                    "label": info.label_name,
                }
            )
        return {"data_dir": str(base), "rows": rows}

    @app.post("/synthetic")
    def synthetic(spec: SyntheticSpec):
        ds = gen_synthetic(spec.records, spec.features, seed=spec.seed, noise=spec.noise)
        return {
            "feature_names": list(ds.feature_names),
            "X": ds.X.tolist(),
            "y": ds.y.tolist(),
        }

    @app.post("/train")
    def train(req: TrainRequest):
        ds = _load_source(req)
        train_ds, test_ds = ds, ds
        evaluated_on = "train"
        if req.split > 0.0:
            train_ds, test_ds = split_train_test(ds, test_fraction=req.split, seed=req.seed)
            evaluated_on = "test"
        scaler = None
        X_test = test_ds.X
        if req.standardize:
            train_ds, scaler = standardize(train_ds)
            X_test = scaler.transform(test_ds.X)
        params = train_protocol(
            req.protocol,
            train_ds.X,
            train_ds.y,
            sigmoid=req.sigmoid,
            poly_degree=req.sigmoid_degree,
            newton_iterations=req.iters,
            inversion_iterations=req.inv_iters,
            frac_bits=req.frac_bits,
            seed=req.seed,
            parties=req.parties,
            n_owners=req.owners,
        )
        report = training_report(params, evaluate_model(params, X_test, test_ds.y))
        report["protocol"] = req.protocol
        report["feature_names"] = list(train_ds.feature_names)
        report["standardized"] = req.standardize
        report["split"] = req.split
        report["evaluated_on"] = evaluated_on
        report["n_train_records"] = train_ds.n_records
        report["n_test_records"] = test_ds.n_records if evaluated_on == "test" else 0
        if scaler is not None:
            report["beta_raw"] = [float(b) for b in scaler.inverse_beta(np.asarray(params.beta))]
        return {"report": report, "comm": comm_report(params)}

    @app.post("/bench")
    def bench(req: BenchRequest):
        series = run_bench(
            mode=req.mode,
            sizes=tuple(req.sizes),
            fixed=req.fixed,
            protocols=tuple(req.protocols),
            repeats=req.repeats,
            newton_iterations=req.iters,
            seed=req.seed,
        )
        return {
            "mode": series.mode,
            "fixed": series.fixed,
            "repeats": series.repeats,
            "points": series.records(),
            "csv": series.csv(),
        }

    @app.post("/comm-report")
    def comm(req: CommRequest):
        ds = _load_source(req)
        if req.standardize:
            ds, _ = standardize(ds)
        params = train_protocol(
            req.protocol,
            ds.X,
            ds.y,
            sigmoid=req.sigmoid,
            poly_degree=req.sigmoid_degree,
            newton_iterations=req.iters,
            inversion_iterations=req.inv_iters,
            frac_bits=req.frac_bits,
            seed=req.seed,
        )
        report = comm_report(params)
        report["protocol"] = req.protocol
        return {"report": report}

    @app.post("/reproduce-tables")
    def reproduce(req: ReproduceRequest):
        out = {}
        if req.which in ("coefficients", "both"):
            table = reproduce_coefficients(
                data_dir=req.data_dir,
                newton_iterations=req.iters,
                inversion_iterations=req.inv_iters,
                seed=req.seed,
                standardize_features=req.standardize,
            )
            out["coefficients"] = {
                "provenance": table.provenance,
                "rows": table.rows,
                "text": table.text(),
            }
        if req.which in ("metrics", "both"):
            table = reproduce_metrics(
                data_dir=req.data_dir,
                datasets=tuple(req.datasets),
                degrees=tuple(req.degrees),
                newton_iterations=req.iters,
                seed=req.seed,
                test_fraction=req.split,
            )
            out["metrics"] = {
                "provenance": table.provenance,
                "rows": table.rows,
                "text": table.text(),
            }
        return out

    return app


app = create_app()
