"""Command-line interface: compile schemas, generate constrained output, evaluate datasets."""

from __future__ import annotations

import functools
import json
import sys
from pathlib import Path

import click

from .automaton import (
    Vocabulary,
    kernel_backend,
    load_vocabulary,
    schema_dfa,
    shortest_accept_length,
    token_index_for_schema,
)
from .backends import (
    AdversarialProvider,
    ConstantProvider,
    GrammarKind,
    MockProvider,
    MockProviderSpec,
    RemoteBackend,
    RemoteBackendConfig,
    ScriptedProvider,
)
from .decoding import DecodeConfig, DecodeMode, decode
from .errors import SchemaforceError
from .harness import (
    AnswerMode,
    DatasetRecord,
    LocalRunner,
    MatchMode,
    RemoteRunner,
    render_report,
    run_pipeline,
    select_schema,
)
from .patterns import render_regex, schema_to_regex
from .schema import parse_schema, validate_instance

LOCAL_BACKENDS = ("mock", "adversarial", "constant", "scripted")


def _fail_on_package_errors(func):
    @functools.wraps(func)
    def wrapper(*args, **kwargs):
        try:
            return func(*args, **kwargs)
        except SchemaforceError as exc:
            raise click.ClickException(f"{type(exc).__name__}: {exc}") from exc

    return wrapper


@click.group()
@click.version_option(package_name="schemaforce")
def main() -> None:
    """Schema-constrained decoding toolkit."""


@main.command("compile")
@click.argument("schema_path", type=click.Path(exists=True, dir_okay=False))
@click.option("--stats/--no-stats", default=True, help="Print automaton statistics.")
@_fail_on_package_errors
def compile_cmd(schema_path: str, stats: bool) -> None:
    """Compile a schema file to its pattern and automaton."""
    spec = parse_schema(Path(schema_path).read_text(encoding="utf-8"))
    click.echo(render_regex(schema_to_regex(spec.parameters)))
    if stats:
        dfa = schema_dfa(spec.parameters)
        click.echo(f"states: {dfa.n_states}", err=True)
        click.echo(f"live states: {len(dfa.live)}", err=True)
        click.echo(f"accepting states: {len(dfa.accepts)}", err=True)
        click.echo(f"shortest sentence: {shortest_accept_length(dfa)}", err=True)
        click.echo(f"kernel: {kernel_backend()}", err=True)


def _local_provider(backend: str, vocab: Vocabulary, seed: int, index, target: str | None):
    if backend == "mock":
        return MockProvider(len(vocab), MockProviderSpec(seed=seed))
    if backend == "adversarial":
        return AdversarialProvider(index, seed=seed)
    if backend == "constant":
        return ConstantProvider(len(vocab))
    if backend == "scripted":
        if target is None:
            raise click.UsageError("--target is required with the scripted backend")
        return ScriptedProvider(target, vocab)
    raise click.UsageError(f"unknown backend {backend!r}")


@main.command()
@click.option("--schema", "schema_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--vocab", "vocab_path", type=click.Path(exists=True, dir_okay=False), help="Vocabulary JSON (required for local backends).")
@click.option("--prompt", default="", help="Prompt context passed to the provider.")
@click.option("--backend", default="mock", type=click.Choice(LOCAL_BACKENDS + ("remote",)))
@click.option("--target", default=None, help="Target sentence for the scripted backend.")
@click.option("--seed", default=0, show_default=True)
@click.option("--max-tokens", default=256, show_default=True)
@click.option("--sample", is_flag=True, help="Sample from the masked softmax instead of greedy.")
@click.option("--temperature", default=1.0, show_default=True)
@click.option("--endpoint", envvar="SCHEMAFORCE_ENDPOINT", help="Remote endpoint URL (env: SCHEMAFORCE_ENDPOINT).")
@click.option("--auth-token", envvar="SCHEMAFORCE_AUTH_TOKEN", help="Bearer token (env: SCHEMAFORCE_AUTH_TOKEN).")
@click.option("--grammar-kind", default="regex", type=click.Choice(["regex", "json"]), help="Grammar parameter flavor for remote backends.")
@click.option("--timeout", default=30.0, show_default=True)
@_fail_on_package_errors
def generate(
    schema_path: str,
    vocab_path: str | None,
    prompt: str,
    backend: str,
    target: str | None,
    seed: int,
    max_tokens: int,
    sample: bool,
    temperature: float,
    endpoint: str | None,
    auth_token: str | None,
    grammar_kind: str,
    timeout: float,
) -> None:
    """Run one constrained generation and validate the result."""
    spec = parse_schema(Path(schema_path).read_text(encoding="utf-8"))
    if backend == "remote":
        if not endpoint:
            raise click.UsageError("remote backend needs --endpoint or SCHEMAFORCE_ENDPOINT")
        config = RemoteBackendConfig(
            endpoint_url=endpoint,
            timeout=timeout,
            max_new_tokens=max_tokens,
            grammar_kind=GrammarKind(grammar_kind),
            auth_token=auth_token,
        )
        grammar = (
            render_regex(schema_to_regex(spec.parameters))
            if config.grammar_kind is GrammarKind.REGEX
            else spec
        )
        text = RemoteBackend(config).generate(prompt, grammar)
    else:
        if not vocab_path:
            raise click.UsageError("local backends need --vocab")
        vocab = load_vocabulary(vocab_path)
        index = token_index_for_schema(spec.parameters, vocab)
        provider = _local_provider(backend, vocab, seed, index, target)
        config = DecodeConfig(
            mode=DecodeMode.SAMPLE if sample else DecodeMode.GREEDY,
            seed=seed,
            temperature=temperature,
            max_tokens=max_tokens,
        )
        text = decode(provider, prompt, index, config).text
    click.echo(text)
    report = validate_instance(spec.parameters, text)
    if not report.valid:
        reasons = ", ".join(v.reason.value for v in report.violations)
        raise click.ClickException(f"output failed validation: {reasons}")


@main.command("eval")
@click.option("--dataset", "dataset_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--vocab", "vocab_path", type=click.Path(exists=True, dir_okay=False))
@click.option("--backend", default="mock", type=click.Choice(LOCAL_BACKENDS + ("remote",)))
@click.option("--script", "script_path", type=click.Path(exists=True, dir_okay=False), help="JSON map record id -> target sentence (scripted backend).")
@click.option("--predictions", "predictions_path", required=True, type=click.Path(dir_okay=False))
@click.option("--report", "report_path", type=click.Path(dir_okay=False))
@click.option("--title", default=None, help="Label for the overall report row.")
@click.option("--mode", default="auto", type=click.Choice(["auto", "exact", "concise"]))
@click.option("--match", "match_mode", default="exact", type=click.Choice(["exact", "substring"]))
@click.option("--seed", default=0, show_default=True)
@click.option("--max-tokens", default=256, show_default=True)
@click.option("--parallelism", default=1, show_default=True)
@click.option("--endpoint", envvar="SCHEMAFORCE_ENDPOINT", help="Remote endpoint URL (env: SCHEMAFORCE_ENDPOINT).")
@click.option("--auth-token", envvar="SCHEMAFORCE_AUTH_TOKEN", help="Bearer token (env: SCHEMAFORCE_AUTH_TOKEN).")
@click.option("--grammar-kind", default="regex", type=click.Choice(["regex", "json"]))
@click.option("--timeout", default=30.0, show_default=True)
@_fail_on_package_errors
def eval_cmd(
    dataset_path: str,
    vocab_path: str | None,
    backend: str,
    script_path: str | None,
    predictions_path: str,
    report_path: str | None,
    title: str | None,
    mode: str,
    match_mode: str,
    seed: int,
    max_tokens: int,
    parallelism: int,
    endpoint: str | None,
    auth_token: str | None,
    grammar_kind: str,
    timeout: float,
) -> None:
    """Evaluate a dataset: predictions JSONL plus an accuracy report."""
    if backend == "remote":
        if not endpoint:
            raise click.UsageError("remote backend needs --endpoint or SCHEMAFORCE_ENDPOINT")
        runner = RemoteRunner(
            RemoteBackendConfig(
                endpoint_url=endpoint,
                timeout=timeout,
                max_new_tokens=max_tokens,
                grammar_kind=GrammarKind(grammar_kind),
                auth_token=auth_token,
            )
        )
    else:
        if not vocab_path:
            raise click.UsageError("local backends need --vocab")
        vocab = load_vocabulary(vocab_path)
        config = DecodeConfig(seed=seed, max_tokens=max_tokens)
        if backend == "scripted":
            if not script_path:
                raise click.UsageError("scripted backend needs --script")
            script = json.loads(Path(script_path).read_text(encoding="utf-8"))

            def factory(record: DatasetRecord):
                target = script.get(record.id)
                if target is None:
                    raise click.ClickException(f"script has no target for record {record.id!r}")
                return ScriptedProvider(target, vocab)

        elif backend == "mock":

            def factory(record: DatasetRecord):
                return MockProvider(len(vocab), MockProviderSpec(seed=seed))

        elif backend == "constant":

            def factory(record: DatasetRecord):
                return ConstantProvider(len(vocab))

        else:  # adversarial needs the record's own index
            local_runner_box: list[LocalRunner] = []

            def factory(record: DatasetRecord):
                index = local_runner_box[0].index_for(select_schema(record))
                return AdversarialProvider(index, seed=seed)

        runner = LocalRunner(factory, vocab, config)
        if backend == "adversarial":
            local_runner_box.append(runner)

    answer_mode = None if mode == "auto" else AnswerMode(mode)
    _, report = run_pipeline(
        dataset_path,
        runner,
        predictions_path,
        mode=answer_mode,
        match_mode=MatchMode(match_mode),
        parallelism=parallelism,
        report_path=report_path,
        report_title=title,
    )
    click.echo(render_report(report, title))


if __name__ == "__main__":
    sys.exit(main())
