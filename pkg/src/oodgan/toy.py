"""Template-generated four-intent task with a structurally distinct OOD test set."""

from __future__ import annotations

import random
from pathlib import Path

from oodgan.corpus import OOD_LABEL, RawSplit, write_generic_tsv

SLOTS = {
    "time": ["7 am", "6 am", "8:30 am", "noon", "9 pm", "midnight", "5:15 pm", "10 am", "half past six", "7:45 am"],
    "day": ["today", "tomorrow", "tonight", "on monday", "on friday", "this weekend", "next week", "on sunday"],
    "city": ["paris", "london", "boston", "tokyo", "chicago", "madrid", "seattle", "berlin", "denver", "rome"],
    "task": ["buy milk", "call mom", "pay the bills", "water the plants", "feed the cat", "take my pills",
             "send the report", "book a dentist appointment", "pick up the kids", "renew my passport"],
    "genre": ["jazz", "rock", "classical", "pop", "country", "hip hop", "blues", "reggae"],
    "artist": ["the beatles", "adele", "miles davis", "taylor swift", "queen", "bob marley", "mozart", "drake"],
}

INTENTS = {
    "set_alarm": [
        "set an alarm for {time}",
        "wake me up at {time} {day}",
        "please set my alarm to {time}",
        "create an alarm at {time} {day}",
        "i need an alarm for {time}",
        "snooze the alarm for ten minutes",
        "change my {day} alarm to {time}",
    ],
    "get_weather": [
        "what is the weather in {city}",
        "will it rain in {city} {day}",
        "how hot is it in {city}",
        "show me the forecast for {city} {day}",
        "is it going to snow {day}",
        "do i need an umbrella in {city} {day}",
        "what is the temperature in {city} {day}",
    ],
    "set_reminder": [
        "remind me to {task} {day}",
        "set a reminder to {task} at {time}",
        "please remind me to {task}",
        "create a reminder to {task} {day}",
        "show my reminders for {day}",
        "do not let me forget to {task}",
        "add a reminder to {task} at {time} {day}",
    ],
    "play_music": [
        "play some {genre} music",
        "play {artist}",
        "put on a {genre} song",
        "i want to hear {artist}",
        "play the latest album by {artist}",
        "start a {genre} playlist",
        "play {genre} music by {artist}",
    ],
}

# other domains; they reuse some IND slot words and function words
OOD_TEMPLATES = [
    "what is the capital of {country}",
    "how do i cook {food}",
    "tell me a joke about {animal}",
    "book a table for {num} people {day}",
    "what time is it in {city}",
    "translate {word} to spanish",
    "who won the {sport} game {day}",
    "order a {food} for delivery at {time}",
    "how many calories are in {food}",
    "find flights from {city} to {city2}",
    "what is the population of {city}",
    "how far is {city} from {city2}",
    "who wrote the book about {animal}",
    "buy tickets for the {sport} match {day}",
    "what does {word} mean",
    "how tall is the tower in {city}",
]

OOD_SLOTS = {
    "country": ["france", "japan", "brazil", "canada", "egypt", "peru"],
    "food": ["pasta", "pizza", "sushi", "pancakes", "a steak", "tacos"],
    "animal": ["cats", "dogs", "penguins", "sharks", "owls"],
    "num": ["two", "four", "six", "three"],
    "word": ["hello", "library", "butterfly", "friendship", "window"],
    "sport": ["football", "baseball", "hockey", "tennis"],
    "city2": ["paris", "london", "boston", "tokyo"],
}


def _fill(template: str, rng: random.Random, slots: dict) -> str:
    out = template
    for name, values in slots.items():
        key = "{" + name + "}"
        while key in out:
            out = out.replace(key, rng.choice(values), 1)
    return out


def _unique(rng, make, n, exclude, limit=200):
    seen, out = set(exclude), []
    tries = 0
    while len(out) < n and tries < n * limit:
        tries += 1
        text = make()
        if text not in seen:
            seen.add(text)
            out.append(text)
    return out


def make_toy_task(
    seed: int = 0, n_train: int = 100, n_valid: int = 25, n_test: int = 50, n_test_ood: int = 200
) -> RawSplit:
    """Per-intent counts for IND splits; texts are unique across splits."""
    rng = random.Random(seed)
    raw = RawSplit()
    used: set = set()
    for split, n in (("train", n_train), ("valid", n_valid), ("test", n_test)):
        rows = []
        for intent, templates in INTENTS.items():
            texts = _unique(rng, lambda: _fill(rng.choice(templates), rng, SLOTS), n, used)
            used.update(texts)
            rows.extend((t, intent) for t in texts)
        rng.shuffle(rows)
        setattr(raw, split, rows)
    ood_slots = {**OOD_SLOTS, **SLOTS}
    raw.test_ood = _unique(rng, lambda: _fill(rng.choice(OOD_TEMPLATES), rng, ood_slots), n_test_ood, used)
    return raw


def write_toy_dataset(root: str | Path, seed: int = 0, **sizes) -> Path:
    """Write the toy task as a generic_tsv directory."""
    root = Path(root)
    root.mkdir(parents=True, exist_ok=True)
    raw = make_toy_task(seed, **sizes)
    write_generic_tsv(root / "train.tsv", [(t, lab) for t, lab in raw.train])
    write_generic_tsv(root / "valid.tsv", [(t, lab) for t, lab in raw.valid])
    write_generic_tsv(root / "test.tsv", [(t, lab) for t, lab in raw.test] + [(t, OOD_LABEL) for t in raw.test_ood])
    return root


if __name__ == "__main__":
    import argparse

    ap = argparse.ArgumentParser(description="write the four-intent toy task as generic_tsv")
    ap.add_argument("out")
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()
    print(write_toy_dataset(args.out, args.seed))
