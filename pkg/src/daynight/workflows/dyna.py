from dataclasses import asdict, make_dataclass
from datetime import timedelta
from pprint import pformat
from typing import Any, Dict, Tuple, Type

import pandas as pd
from flytekit import Resources, task, workflow
from flytekit.types.file import FlyteFile
from mashumaro.mixins.json import DataClassJSONMixin

from daynight.configuration import (
    RunConfig,
    SourceConfig,
    create_dataclass_from_callable,
)
from daynight.data.synth import benchmark_suite
from daynight.harness.deployment import evaluate_offline, run_deployment
from daynight.logging import configure_logging
from daynight.model.checkpoint import load_model, save_model
from daynight.model.training import train_source

logger = configure_logging("daynight.workflows.dyna")

# Overrides of the types and defaults inferred from `benchmark_suite`.
custom_types_defaults: Dict[str, Tuple[Type, Any]] = {
    "n_target": (int, 100),
}

benchmark_fields = create_dataclass_from_callable(
    benchmark_suite, custom_types_defaults
)

BenchmarkInterface = make_dataclass(
    "BenchmarkInterface",
    benchmark_fields,
    bases=(DataClassJSONMixin,),
)
BenchmarkInterface.__module__ = __name__


@task(
    cache=True,
    cache_version="0.1.0",
    retries=3,
    interruptible=True,
    timeout=timedelta(minutes=60),
    requests=Resources(cpu="1", mem="2Gi", ephemeral_storage="1Gi"),
)
def train_source_task(
    benchmark: BenchmarkInterface = BenchmarkInterface(),
    source: SourceConfig = SourceConfig(),
) -> FlyteFile:
    """
    Train the source model on the benchmark's source training split.
    """
    logger.info(f"{pformat(benchmark)}\n\n")
    suite = benchmark_suite(**asdict(benchmark))
    model = train_source(
        suite.source_train,
        epochs=source.epochs,
        lr=source.lr,
        seed=benchmark.seed,
        batch_size=source.batch_size,
    )
    model_path = "source.dyna"
    save_model(model, model_path)
    return FlyteFile(model_path)


@task(
    cache=True,
    cache_version="0.1.0",
    retries=3,
    interruptible=True,
    timeout=timedelta(minutes=60),
    requests=Resources(cpu="1", mem="2Gi", ephemeral_storage="1Gi"),
)
def deploy_task(
    checkpoint: FlyteFile,
    benchmark: BenchmarkInterface = BenchmarkInterface(),
    run: RunConfig = RunConfig(),
) -> Tuple[pd.DataFrame, str]:
    """
    Day-night deployment on the configured target stream; returns the
    per-sample scores and the JSON summary.
    """
    model = load_model(checkpoint.download())
    stream = benchmark_suite(**asdict(benchmark)).target(run.target)
    report = run_deployment(run, model, stream)
    return report.samples, report.summary.to_report_json()


@task(
    cache=True,
    cache_version="0.1.0",
    retries=3,
    interruptible=True,
    timeout=timedelta(minutes=10),
    requests=Resources(cpu="500m", mem="1Gi", ephemeral_storage="1Gi"),
)
def evaluate_task(
    checkpoint: FlyteFile,
    benchmark: BenchmarkInterface = BenchmarkInterface(),
    run: RunConfig = RunConfig(),
) -> float:
    """
    Offline Dice of a checkpoint on the configured target stream.
    """
    model = load_model(checkpoint.download())
    stream = benchmark_suite(**asdict(benchmark)).target(run.target)
    return evaluate_offline(model, stream)


@workflow
def dyna_workflow(
    benchmark: BenchmarkInterface = BenchmarkInterface(),
    source: SourceConfig = SourceConfig(),
    run: RunConfig = RunConfig(),
) -> Tuple[pd.DataFrame, str, float]:
    """
    Source training, deployment, and the source-only offline baseline.
    """
    checkpoint = train_source_task(benchmark=benchmark, source=source)
    samples, summary = deploy_task(
        checkpoint=checkpoint, benchmark=benchmark, run=run
    )
    source_only = evaluate_task(checkpoint=checkpoint, benchmark=benchmark, run=run)
    return samples, summary, source_only


if __name__ == "__main__":
    print(f"Running dyna_workflow() {dyna_workflow()}")
