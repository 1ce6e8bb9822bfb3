"""Seeded synthetic retail data for the packaged star schema."""

from __future__ import annotations

import datetime as dt
from importlib import resources

import numpy as np

from ..schema import SchemaModel, load_schema
from ..executor.star import StarData

START = dt.date(2023, 1, 1)
END = dt.date(2025, 1, 1)  # exclusive

GEOGRAPHY = {
    "North": ["Aberdeen", "Bergen", "Tromso"],
    "South": ["Cadiz", "Malaga", "Seville"],
    "East": ["Krakow", "Lublin", "Warsaw"],
    "West": ["Brest", "Nantes", "Rennes"],
}
CATALOG = {
    "electronics": ["audio", "computers", "phones"],
    "toys": ["board games", "dolls", "puzzles"],
    "grocery": ["beverages", "dairy", "snacks"],
    "apparel": ["footwear", "outerwear", "shirts"],
    "home": ["bedding", "cookware", "lighting"],
}
BRANDS = ["acme", "borealis", "corvid", "dunmore", "elkhorn", "fathom", "gale", "harbor"]
CHANNELS = ["online", "store"]


def retail_schema() -> SchemaModel:
    return load_schema(resources.files("intentcache.data").joinpath("retail_schema.yaml").read_text(encoding="utf-8"))


def _dates() -> dict[str, list]:
    days = [START + dt.timedelta(days=i) for i in range((END - START).days)]
    return {
        "date_id": [d.year * 10000 + d.month * 100 + d.day for d in days],
        "day": days,
        "month": [f"{d.year}-{d.month:02d}" for d in days],
        "quarter": [f"{d.year}-Q{(d.month - 1) // 3 + 1}" for d in days],
        "year": [d.year for d in days],
    }


def _stores(rng: np.random.Generator) -> dict[str, list]:
    out: dict[str, list] = {"store_id": [], "store_name": [], "city": [], "region": []}
    sid = 1
    for region, cities in GEOGRAPHY.items():
        for city in cities:
            for _ in range(int(rng.integers(2, 4))):
                out["store_id"].append(sid)
                out["store_name"].append(f"{city} #{sid:02d}")
                out["city"].append(city)
                out["region"].append(region)
                sid += 1
    return out


def _products(rng: np.random.Generator) -> tuple[dict[str, list], np.ndarray]:
    out: dict[str, list] = {"product_id": [], "product_name": [], "subcategory": [], "category": [], "brand": []}
    prices = []
    pid = 1
    for category, subs in CATALOG.items():
        for sub in subs:
            for k in range(4):
                out["product_id"].append(pid)
                out["product_name"].append(f"{sub} {chr(ord('a') + k)}")
                out["subcategory"].append(sub)
                out["category"].append(category)
                out["brand"].append(BRANDS[int(rng.integers(len(BRANDS)))])
                prices.append(round(float(rng.uniform(2.0, 400.0)), 2))
                pid += 1
    return out, np.array(prices)


def generate_retail(seed: int = 7, fact_rows: int = 50_000, schema: SchemaModel | None = None) -> StarData:
    """Deterministic for a given (seed, fact_rows). Amounts are positive, cent-rounded."""
    schema = schema if schema is not None else retail_schema()
    rng = np.random.default_rng(seed)
    dates = _dates()
    stores = _stores(rng)
    products, prices = _products(rng)
    n = fact_rows
    day_idx = rng.integers(0, len(dates["day"]), n)
    store_idx = rng.integers(0, len(stores["store_id"]), n)
    # mild popularity skew over products
    weights = 1.0 / np.arange(1, len(prices) + 1) ** 0.6
    prod_idx = rng.choice(len(prices), size=n, p=weights / weights.sum())
    quantity = rng.integers(1, 6, n)
    jitter = rng.uniform(0.9, 1.1, n)
    amount = np.round(prices[prod_idx] * quantity * jitter, 2)
    discount = rng.choice([0.0, 0.05, 0.1, 0.2], size=n, p=[0.55, 0.2, 0.15, 0.1])
    net = np.round(amount * (1.0 - discount), 2)
    cost = np.round(amount * rng.uniform(0.4, 0.8, n), 2)
    channel = rng.choice(len(CHANNELS), size=n, p=[0.35, 0.65])
    order = np.lexsort((store_idx, day_idx))  # time-ordered like a real fact table
    sales = {
        "sale_id": list(range(1, n + 1)),
        "sale_date": [dates["day"][i] for i in day_idx[order]],
        "date_id": [dates["date_id"][i] for i in day_idx[order]],
        "store_id": [stores["store_id"][i] for i in store_idx[order]],
        "product_id": [products["product_id"][i] for i in prod_idx[order]],
        "channel": [CHANNELS[i] for i in channel[order]],
        "amount": amount[order].tolist(),
        "net_amount": net[order].tolist(),
        "cost": cost[order].tolist(),
        "quantity": quantity[order].tolist(),
    }
    return StarData.from_columns(schema, {"sales": sales, "dates": dates, "stores": stores, "products": products})
