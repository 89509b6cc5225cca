"""Web-shop navigation abstracted as a page graph.

Search -> Results -> Product -> BuyNow -> AdPage -> Done.  The ad page has
four buttons; only the correct one exits, the others reload the ad.  A
purchase scores the fraction of instruction attributes it satisfies, with the
colour attribute resolved through a semantic map ("warm color" -> yellow),
which is what implicit drift rewrites.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..bank import BankConfig, StateKey
from .base import DriftSchedule, Environment, mutation_kind

SEARCH, RESULTS, PRODUCT, BUYNOW, AD, DONE = "search", "results", "product", "buynow", "ad", "done"
BUTTONS = ("A", "B", "C", "D")


@dataclass(frozen=True)
class Item:
    id: str
    name: str
    category: str
    size: str
    price: float
    options: tuple[str, ...]


DEFAULT_CATALOG = (
    Item("B09KP78G37", "Women Fleece Jacket Zip Up", "fleece jacket", "m", 35.99,
         ("yellow", "red", "blue", "green")),
    Item("B07HRFSNL4", "Women Fleece Jacket Zip Up", "fleece jacket", "l", 29.99,
         ("yellow", "red", "blue", "green")),
    Item("B08XQG5R2M", "Women Fleece Vest Sleeveless", "fleece vest", "m", 24.50,
         ("yellow", "red", "blue", "green")),
    Item("B09T3L7WCD", "Women Sherpa Fleece Jacket", "fleece jacket", "m", 52.00,
         ("yellow", "red", "blue", "green")),
)


@dataclass
class ShopGraphSpec:
    category: str = "fleece jacket"
    size: str = "m"
    max_price: float = 40.0
    semantic: str = "warm color"
    semantic_map: dict[str, str] = field(default_factory=lambda: {"warm color": "yellow"})
    catalog: tuple[Item, ...] = DEFAULT_CATALOG
    correct_button: str = "A"

    def __post_init__(self):
        if self.correct_button not in BUTTONS:
            raise ValueError(f"correct button must be one of {BUTTONS}")
        if self.semantic not in self.semantic_map:
            raise ValueError(f"semantic map has no entry for {self.semantic!r}")
        full = [(i, o) for i, item in enumerate(self.catalog) for o in item.options
                if self.score(i, o) == 100.0]
        if len(full) != 1:
            raise ValueError(f"exactly one purchasable option must fully match, found {len(full)}")

    @property
    def instruction(self) -> str:
        return (f"i need a {self.semantic} {self.category} in size {self.size}, "
                f"and price lower than {self.max_price:.2f} dollars")

    def score(self, item_index: int, option: str) -> float:
        item = self.catalog[item_index]
        hits = [
            item.category == self.category,
            item.size == self.size,
            item.price <= self.max_price,
            option == self.semantic_map[self.semantic],
        ]
        return 100.0 * sum(hits) / len(hits)


class ShopGraph(Environment):
    name = "shopgraph"
    max_score = 100.0
    step_cap = 30

    def action_space(self) -> list[int]:
        return [0, 1, 2, 3]

    def is_deterministic(self) -> bool:
        return True

    def default_bank_config(self) -> BankConfig:
        return BankConfig(key_fields=("page", "loc", "score"))

    def default_horizon(self) -> int:
        return 10

    def form_state(self) -> dict:
        w = self._world
        page, item, option = w["page"], w["item"], w["option"]
        return {"page": page, "loc": self._url(page, item, option), "text": self._text(page, item, option),
                "score": w["score"]}

    def terminal_score(self, key: StateKey) -> float | None:
        f = key.fields()
        if f.get("page") == DONE:
            return float(f["score"])
        return None

    def success(self, score: float, state: dict) -> bool:
        return score >= self.max_score

    def apply_drift(self, mutation) -> None:
        kind = mutation_kind(mutation, ("button_remap", "attribute_remap"))
        if kind == "button_remap":
            button = mutation.get("button")
            if button not in BUTTONS:
                raise ValueError(f"button_remap needs a button in {BUTTONS}")
            self.spec.correct_button = button
            return
        attribute, option = mutation.get("attribute", self.spec.semantic), mutation.get("option")
        if not option:
            raise ValueError("attribute_remap needs an 'option'")
        self.spec.semantic_map = {**self.spec.semantic_map, attribute: option}

    def _initial_world(self, rng: np.random.Generator) -> dict:
        return {"page": SEARCH, "item": None, "option": None, "score": 0, "done": False}

    def _transition(self, action, rng: np.random.Generator) -> float:
        w = self._world
        page = w["page"]
        if page == SEARCH:
            if action == 0:
                w["page"] = RESULTS
        elif page == RESULTS:
            if action < len(self.spec.catalog):
                w.update(page=PRODUCT, item=action)
        elif page == PRODUCT:
            options = self.spec.catalog[w["item"]].options
            if action < len(options):
                w.update(page=BUYNOW, option=options[action])
        elif page == BUYNOW:
            if action == 0:
                w["page"] = AD
            elif action == 1:
                w.update(page=SEARCH, item=None, option=None)
        elif page == AD:
            if BUTTONS[action] == self.spec.correct_button:
                score = self.spec.score(w["item"], w["option"])
                w.update(page=DONE, score=score, done=True)
                return score
        return 0.0

    # -- rendering ---------------------------------------------------------

    def _url(self, page, item, option) -> str:
        if page == SEARCH:
            return "/search"
        if page == RESULTS:
            return "/search_results/1"
        item_id = self.spec.catalog[item].id
        if page == PRODUCT:
            return f"/item/{item_id}"
        return f"/{page}/{item_id}/{option}"

    def _text(self, page, item, option) -> str:
        spec = self.spec
        if page == SEARCH:
            return f"Instruction: {spec.instruction} [Search]"
        if page == RESULTS:
            listing = " ".join(f"{it.id} {it.name} ${it.price:.2f}" for it in spec.catalog)
            return f"Back to Search Page 1 (Total results: {len(spec.catalog)}) Next > {listing}"
        it = spec.catalog[item]
        if page == PRODUCT:
            return (f"Back to Search < Prev {it.name} size: {it.size} Price: ${it.price:.2f} "
                    f"color: {' '.join(it.options)}")
        if page == BUYNOW:
            return f"{it.name} color: {option} Price: ${it.price:.2f} [Buy Now] [Back to Search]"
        if page == AD:
            return "Limited offer! " + " ".join(f"[{b}]" for b in BUTTONS)
        return f"Thank you for shopping with us! Your score: {self._world['score']}"


def make(schedule: DriftSchedule | None = None, snapshots: bool = True, **spec) -> ShopGraph:
    return ShopGraph(ShopGraphSpec(**spec), schedule, snapshots)
