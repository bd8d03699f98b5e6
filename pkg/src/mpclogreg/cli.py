"""Command line for training, benchmarks and table reproduction.

Thin client of the HTTP service: by default the app runs in-process (no
server required), with --server the same requests go to a running
instance, so both paths exercise identical endpoints. File paths in
requests are resolved where the service runs; reports are written where
the client runs.

Exit codes: 0 success, 1 usage error, 2 data error, 3 protocol error.
"""

import csv
import json
import sys
import warnings
from typing import Optional

import click

from .reports import PROTOCOL_CHOICES, render_kv

EXIT_BY_ERROR_TYPE = {"usage": 1, "data": 2, "protocol": 3}


class ServiceClient:
    """POST/GET against the in-process app or a remote server."""

    def __init__(self, server: Optional[str] = None):
        if server is None:
            # the in-process client pulls in the service lazily so plain
            # --help stays fast
            warnings.filterwarnings("ignore", message=".*httpx2.*")
            from fastapi.testclient import TestClient

            from .service import app

            self._client = TestClient(app)
        else:
            import httpx

            self._client = httpx.Client(base_url=server, timeout=3600.0)

    def get(self, path, params=None):
        return self._client.get(path, params=params)

    def post(self, path, payload):
        return self._client.post(path, json=payload)

    def close(self):
        self._client.close()


def call(server: Optional[str], method: str, path: str, payload=None) -> dict:
    """Runs one request and turns service errors into the exit-code contract."""
    client = ServiceClient(server)
    try:
        if method == "get":
            resp = client.get(path, params=payload)
        else:
            resp = client.post(path, payload)
    except Exception as exc:
        click.echo(f"error (protocol): cannot reach the service: {exc}", err=True)
        sys.exit(3)
    finally:
        client.close()
    if resp.status_code >= 400:
        try:
            body = resp.json()
        except ValueError:
            body = {"error_type": "protocol", "message": resp.text}
        kind = body.get("error_type", "protocol")
        click.echo(f"error ({kind}): {body.get('message', '')}", err=True)
        sys.exit(EXIT_BY_ERROR_TYPE.get(kind, 3))
    return resp.json()


def write_out(out: Optional[str], body: dict) -> None:
    if out is not None:
        with open(out, "w") as fh:
            fh.write(json.dumps(body, indent=2) + "\n")
        click.echo(f"wrote {out}")


server_option = click.option(
    "--server", default=None, metavar="URL", help="Use a running service instead of in-process."
)
seed_option = click.option("--seed", default=0, show_default=True, help="Deterministic run seed.")
iters_option = click.option(
    "--iters", default=15, show_default=True, help="Newton update steps."
)
standardize_option = click.option(
    "--standardize", type=click.Choice(["on", "off"]), default="on", show_default=True,
    help="Z-score features before training.",
)


@click.group()
def cli():
    """Logistic regression over secret-shared records, local or 2/3-party."""


@cli.command()
@click.option(
    "--protocol", type=click.Choice(PROTOCOL_CHOICES), default="olr", show_default=True
)
@click.option("--data", required=True, metavar="PATH", help="CSV path or a registered dataset name.")
@click.option("--data-dir", default=None, metavar="DIR", help="Directory for named datasets.")
@iters_option
@click.option("--sigmoid-degree", type=click.Choice(["3", "5", "7"]), default="3", show_default=True)
@click.option("--sigmoid", type=click.Choice(["exact", "poly"]), default=None)
@click.option("--parties", type=click.Choice(["2", "3"]), default=None)
@click.option("--owners", type=int, default=None, help="Record owners feeding the parties.")
@click.option("--frac-bits", default=16, show_default=True)
@click.option("--inv-iters", default=24, show_default=True, help="Matrix-inversion iterations.")
@seed_option
@click.option("--split", default=0.25, show_default=True, help="Held-out fraction (0 trains on everything).")
@standardize_option
@click.option("--out", default=None, metavar="PATH", help="Write the full JSON report here.")
@server_option
def train(protocol, data, data_dir, iters, sigmoid_degree, sigmoid, parties, owners,
          frac_bits, inv_iters, seed, split, standardize, out, server):
    """Train one protocol on a dataset and report coefficients and metrics."""
    body = call(server, "post", "/train", {
        "protocol": protocol,
        "data": data,
        "data_dir": data_dir,
        "iters": iters,
        "sigmoid_degree": int(sigmoid_degree),
        "sigmoid": sigmoid,
        "parties": None if parties is None else int(parties),
        "owners": owners,
        "frac_bits": frac_bits,
        "inv_iters": inv_iters,
        "seed": seed,
        "split": split,
        "standardize": standardize == "on",
    })
    click.echo(render_kv(body["report"]))
    click.echo("")
    click.echo("# communication")
    click.echo(render_kv(body["comm"]))
    write_out(out, body)


@cli.command()
@click.option("--mode", type=click.Choice(["records", "features"]), default="records", show_default=True)
@click.option("--sizes", default="500,1500,4500", show_default=True, help="Comma-separated sweep sizes.")
@click.option("--fixed", default=10, show_default=True, help="The dimension held constant.")
@click.option("--protocols", default="olr,bmpc,cmpc", show_default=True)
@click.option("--repeats", default=10, show_default=True, help="Timed runs per point (mean reported).")
@iters_option
@seed_option
@click.option("--out", default=None, metavar="PATH", help="Write the CSV series here.")
@server_option
def bench(mode, sizes, fixed, protocols, repeats, iters, seed, out, server):
    """Time protocols across synthetic datasets; emits a plot-ready CSV."""
    try:
        size_list = [int(s) for s in sizes.split(",") if s.strip()]
    except ValueError:
        click.echo(f"error (usage): sizes must be comma-separated integers, got {sizes!r}", err=True)
        sys.exit(1)
    body = call(server, "post", "/bench", {
        "mode": mode,
        "sizes": size_list,
        "fixed": fixed,
        "protocols": [p.strip() for p in protocols.split(",") if p.strip()],
        "repeats": repeats,
        "iters": iters,
        "seed": seed,
    })
    click.echo(body["csv"], nl=False)
    if out is not None:
        with open(out, "w") as fh:
            fh.write(body["csv"])
        click.echo(f"wrote {out}")


@cli.command("comm-report")
@click.option(
    "--protocol", type=click.Choice(PROTOCOL_CHOICES), default="cmpc", show_default=True
)
@click.option("--data", default=None, metavar="PATH", help="CSV path or dataset name; synthetic when omitted.")
@click.option("--data-dir", default=None, metavar="DIR")
@click.option("--records", default=200, show_default=True, help="Synthetic records when no data is given.")
@click.option("--features", default=6, show_default=True, help="Synthetic features when no data is given.")
@iters_option
@click.option("--sigmoid-degree", type=click.Choice(["3", "5", "7"]), default="3", show_default=True)
@seed_option
@standardize_option
@click.option("--out", default=None, metavar="PATH", help="Write the JSON report here.")
@server_option
def comm_report(protocol, data, data_dir, records, features, iters, sigmoid_degree,
                seed, standardize, out, server):
    """Train once and report measured message counts next to the reference
    per-multiplication constants."""
    payload = {
        "protocol": protocol,
        "iters": iters,
        "sigmoid_degree": int(sigmoid_degree),
        "seed": seed,
        "standardize": standardize == "on",
    }
    if data is not None:
        payload["data"] = data
        payload["data_dir"] = data_dir
    else:
        payload["synthetic"] = {"records": records, "features": features, "seed": seed}
    body = call(server, "post", "/comm-report", payload)
    click.echo(render_kv(body["report"]))
    write_out(out, body)


@cli.command("reproduce-tables")
@click.option("--which", type=click.Choice(["coefficients", "metrics", "both"]), default="both", show_default=True)
@click.option("--data-dir", default=None, metavar="DIR", help="Directory holding the study CSV files.")
@iters_option
@click.option("--inv-iters", default=24, show_default=True)
@seed_option
@standardize_option
@click.option("--datasets", default="pima,pcs,lbw,uis", show_default=True)
@click.option("--degrees", default="3,5,7", show_default=True)
@click.option("--split", default=0.25, show_default=True)
@click.option("--out", default=None, metavar="PATH", help="Write all tables as JSON here.")
@server_option
def reproduce_tables(which, data_dir, iters, inv_iters, seed, standardize, datasets,
                     degrees, split, out, server):
    """Recompute the coefficient and accuracy/AUC tables with deltas against
    the published values."""
    body = call(server, "post", "/reproduce-tables", {
        "which": which,
        "data_dir": data_dir,
        "iters": iters,
        "inv_iters": inv_iters,
        "seed": seed,
        "standardize": standardize == "on",
        "datasets": [d.strip() for d in datasets.split(",") if d.strip()],
        "degrees": [int(d) for d in degrees.split(",") if d.strip()],
        "split": split,
    })
    for key in ("coefficients", "metrics"):
        if key in body:
            click.echo(body[key]["text"])
    write_out(out, body)


@cli.command()
@click.option("--records", default=200, show_default=True)
@click.option("--features", default=6, show_default=True)
@seed_option
@click.option("--noise", default=0.0, show_default=True, help="Score noise before labeling.")
@click.option("--out", required=True, metavar="PATH", help="CSV file to write.")
@server_option
def synth(records, features, seed, noise, out, server):
    """Generate a labeled synthetic dataset and write it as CSV."""
    body = call(server, "post", "/synthetic", {
        "records": records, "features": features, "seed": seed, "noise": noise,
    })
    names = body["feature_names"][1:]  # the intercept column is implicit in CSV form
    with open(out, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(names + ["label"])
        for row, label in zip(body["X"], body["y"]):
            writer.writerow([repr(v) for v in row[1:]] + [int(label)])
    click.echo(f"wrote {out} ({records} records, {features} features)")


@cli.command()
@click.option("--data-dir", default=None, metavar="DIR")
@server_option
def datasets(data_dir, server):
    """List the registered study datasets and whether their files exist."""
    body = call(server, "get", "/datasets", {"data_dir": data_dir} if data_dir else None)
    click.echo(f"data_dir = {body['data_dir']}")
    for row in body["rows"]:
        status = "present" if row["present"] else "missing (run scripts/fetch_datasets.py)"
        click.echo(
            f"{row['name']}: {row['file']} [{status}] "
            f"expected_records={row['expected_records']} label={row['label']}"
        )


@cli.command()
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port", default=8000, show_default=True)
def serve(host, port):
    """Run the HTTP service in the foreground."""
    import uvicorn

    uvicorn.run("mpclogreg.service:app", host=host, port=port)


def main(argv=None) -> int:
    """Console entry point with the documented exit-code mapping."""
    try:
        cli.main(args=argv, prog_name="mpclogreg", standalone_mode=False)
    except click.exceptions.Exit as exc:
        return int(exc.exit_code)
    except click.UsageError as exc:
        click.echo(f"error (usage): {exc.format_message()}", err=True)
        return 1
    except click.ClickException as exc:
        exc.show()
        return 1
    except SystemExit as exc:
        return int(exc.code or 0)
    return 0


if __name__ == "__main__":
    sys.exit(main())
