"""Assemble schema, data, backend, store and NL canonicalizer from a Config."""

from __future__ import annotations

import logging
import os
from importlib import resources
from dataclasses import dataclass
from functools import cached_property
from typing import Any

from ..config import Config, PolicyConfig
from ..executor.reference import ReferenceBackend
from ..executor.sqlbackend import SqlBackend
from ..executor.star import StarData, load_star_data
from ..nl.canonicalizer import NlCanonicalizer, NlMemo
from ..nl.clients import FixtureClient, HttpClient, load_fixture_records
from ..pipeline import Pipeline
from ..schema import SchemaModel, load_schema
from ..store import CacheStore
from .intents import Intent, attach_gold, load_intents, load_paraphrases
from .synth import generate_retail, retail_schema

log = logging.getLogger(__name__)


@dataclass
class Env:
    config: Config
    schema: SchemaModel
    data: StarData
    backend: Any
    reference: ReferenceBackend  # gold results always come from here

    @cached_property
    def intents(self) -> list[Intent]:
        return attach_gold(load_intents(self.schema), self.reference)

    @cached_property
    def paraphrases(self) -> dict:
        return load_paraphrases()

    def nl_client(self) -> Any:
        return make_nl_client(self.config, self.paraphrases)

    def canonicalizer(self, client: Any = None, persistent_memo: bool = False) -> NlCanonicalizer:
        memo_path = self.config.path(self.config.nl_memo_path) if persistent_memo else None
        return NlCanonicalizer(self.schema, client if client is not None else self.nl_client(), NlMemo(memo_path))

    def store(self, persistent: bool = False, capacity_entries: int | None = None) -> CacheStore:
        cfg = self.config
        root = cfg.path(cfg.cache_dir) if persistent else None
        if capacity_entries is None and persistent:
            capacity_entries = cfg.capacity_entries
        return CacheStore(
            root,
            capacity_bytes=cfg.capacity_bytes if persistent else None,
            capacity_entries=capacity_entries,
            schema_version=self.schema.schema_version,
            result_format=cfg.result_format,
        )

    def pipeline(
        self,
        store: CacheStore | None = None,
        policy: PolicyConfig | None = None,
        nl: NlCanonicalizer | None = None,
    ) -> Pipeline:
        return Pipeline(
            self.schema,
            self.backend,
            store if store is not None else self.store(),
            policy if policy is not None else self.config.policy,
            nl if nl is not None else self.canonicalizer(),
        )


PACKAGED_SCHEMAS = {"retail": "retail_schema.yaml", "fig2": "fig2_schema.yaml"}


def resolve_schema(cfg: Config) -> SchemaModel:
    """``schema`` may name a packaged schema (retail, fig2) or a YAML path."""
    if not cfg.schema or cfg.schema == "retail":
        return retail_schema()
    if cfg.schema in PACKAGED_SCHEMAS:
        return load_schema(resources.files("intentcache.data").joinpath(PACKAGED_SCHEMAS[cfg.schema]).read_text(encoding="utf-8"))
    return load_schema(cfg.path(cfg.schema))


def make_nl_client(cfg: Config, paraphrases: dict | None = None) -> Any:
    """HTTP client, or a fixture client over the packaged paraphrases plus ``nl.fixtures``."""
    if cfg.nl_client == "http":
        if not cfg.nl_url or not cfg.nl_model:
            raise ValueError("nl.client http needs nl.url and nl.model")
        return HttpClient(cfg.nl_url, cfg.nl_model, api_key=os.environ.get(cfg.nl_api_key_env))
    if cfg.nl_client != "fixture":
        raise ValueError(f"unknown NL client {cfg.nl_client!r}")
    paraphrases = paraphrases if paraphrases is not None else load_paraphrases()
    client = FixtureClient([r for recs in paraphrases.values() for r in recs])
    for path in cfg.nl_fixtures:
        for rec in load_fixture_records(cfg.path(path)):
            client.add(rec)
    return client


def build_env(cfg: Config, fact_rows: int | None = None) -> Env:
    schema = resolve_schema(cfg)
    if cfg.data_dir:
        data = load_star_data(schema, cfg.path(cfg.data_dir))
    else:
        data = generate_retail(cfg.seed, fact_rows if fact_rows is not None else cfg.fact_rows, schema)
    reference = ReferenceBackend(data)
    if cfg.backend == "sqlite":
        if cfg.sqlite_path:
            backend = SqlBackend.sqlite(str(cfg.path(cfg.sqlite_path)), schema, data.fingerprint())
        else:
            backend = SqlBackend.from_star(data)
    else:
        backend = reference
    log.info("environment: %s backend, %d fact rows, snapshot %s", cfg.backend, data.tables[schema.fact_tables[0].name].n_rows, data.fingerprint())
    return Env(cfg, schema, data, backend, reference)
