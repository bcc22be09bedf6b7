#!/usr/bin/env python3
"""Regenerates the bundled ingestion fixtures and the frozen golden panel.

The golden aggregates are computed here, independently of the library's
ingestion code. All amounts are dyadic rationals (multiples of 1/64) so the
per-cell sums are exact in binary floating point and the comparison can be
exact equality.
"""
import csv
import json
import math
import random
from pathlib import Path

HERE = Path(__file__).parent
N_DAYS = 30
THRESHOLD = 5

REGISTRY = {
    "0xa0b86991c6218b36c1d19d4a2e9eb0ce3606eb48": "USDC",
    "0xdac17f958d2ee523a2206206994597c13d831ec7": "USDT",
    "0x4fabb145d64652a948d72533023f6e7a623c7c53": "BUSD",
    "0x0000000000085d4780b73119b644ae5ecd22b376": "TUSD",
    "0x056fd409e1d7a124bd7017459dfea2f387b6d5cd": "GUSD",
    "0x6b175474e89094c44da98b954eedeac495271d0f": "DAI",
    "0x853d955acef822db058eb8505911ed77f175b99e": "FRAX",
}
STABLES = sorted(REGISTRY)
UNREGISTERED = "0x1111111111111111111111111111111111111111"

rng = random.Random(20220401)


def dyadic(lo, hi):
    return rng.randrange(int(lo * 64), int(hi * 64)) / 64.0


rows = []  # valid rows


def add(wallet, day, direction, category, token, amount):
    rows.append(
        {
            "wallet_id": wallet,
            "day_index": day,
            "direction": direction,
            "category": category,
            "token_id": token,
            "amount": amount,
        }
    )


# 20 regular wallets, every category, every stablecoin.
for w in range(1, 21):
    wallet = f"0xwallet{w:02d}"
    n_tx = rng.randrange(8, 30)
    for _ in range(n_tx):
        day = rng.randrange(1, N_DAYS + 1)
        direction = rng.choice(["buy", "sell"])
        kind = rng.random()
        if kind < 0.40:
            category = rng.choice(["external", "internal"])
            token = "ETH"
            amount = dyadic(0.25, 8)
        elif kind < 0.80:
            category = "erc20"
            token = STABLES[(w + _) % 7]
            # exercise case-insensitive registry lookup on some rows
            if rng.random() < 0.25:
                token = token.upper().replace("0X", "0x")
            amount = dyadic(10, 500)
        elif kind < 0.90:
            category = "erc20"
            token = UNREGISTERED
            amount = dyadic(1, 50)
        else:
            category = rng.choice(["erc721", "erc1155"])
            token = "0xnftcontract"
            amount = 1.0
        add(wallet, day, direction, category, token, amount)

# threshold edges: 4 transfers (excluded), 5 and 6 (included)
for count, name in [(4, "0xedge4"), (5, "0xedge5"), (6, "0xedge6")]:
    for j in range(count):
        day = 1 + (j * 5) % N_DAYS
        if j == 0:
            # one Other-class transfer: counts toward the threshold,
            # contributes to no stream
            add(name, day, "buy", "erc721", "0xnftcontract", 1.0)
        elif j % 2 == 0:
            add(name, day, "sell", "external", "ETH", dyadic(0.25, 4))
        else:
            add(name, day, "buy", "erc20", STABLES[j % 7], dyadic(10, 100))

# malformed rows, rejected by validation
BAD = [
    {"wallet_id": "0xbad1", "day_index": 3, "direction": "sell", "category": "external", "token_id": "ETH", "amount": -1.5},
    {"wallet_id": "0xbad2", "day_index": 0, "direction": "buy", "category": "erc20", "token_id": STABLES[0], "amount": 5.0},
    {"wallet_id": "0xbad3", "day_index": 9, "direction": "hold", "category": "external", "token_id": "ETH", "amount": 2.0},
    {"wallet_id": "0xbad4", "day_index": 2, "direction": "buy", "category": "erc777", "token_id": STABLES[1], "amount": 2.0},
    {"wallet_id": "", "day_index": 2, "direction": "buy", "category": "external", "token_id": "ETH", "amount": 2.0},
]

fields = ["wallet_id", "day_index", "direction", "category", "token_id", "amount"]
all_rows = rows + BAD
rng.shuffle(all_rows)
with open(HERE / "transfers.csv", "w", newline="") as f:
    w = csv.DictWriter(f, fieldnames=fields)
    w.writeheader()
    for r in all_rows:
        w.writerow(r)

# the same records as JSONL, for the alternate parser path
with open(HERE / "transfers.jsonl", "w") as f:
    for r in all_rows:
        f.write(json.dumps(r) + "\n")

# registry file (mixed case keys on purpose)
with open(HERE / "registry.json", "w") as f:
    json.dump({k.upper().replace("0X", "0x"): v for k, v in REGISTRY.items()}, f, indent=2)

# covariates: full ETHPRICE, RF6M missing on weekends and the two leading days
with open(HERE / "covariates.csv", "w", newline="") as f:
    w = csv.writer(f)
    w.writerow(["day_index", "ethprice", "rf6m"])
    for day in range(1, N_DAYS + 1):
        price = round(1500.0 + 120.0 * math.sin(day / 4.0) + 3.0 * day, 2)
        if day <= 2 or day % 7 in (0, 6):
            rf = ""
        else:
            rf = round(2.5 + 0.01 * day, 4)
        w.writerow([day, price, rf])

# ---------------------------------------------------------------------------
# Independent golden aggregation.
# ---------------------------------------------------------------------------


def classify(category, token):
    if category in ("external", "internal"):
        return "eth"
    if category == "erc20":
        return "stable" if token.lower() in REGISTRY else "other"
    return "other"


counts = {}
for r in rows:
    counts[r["wallet_id"]] = counts.get(r["wallet_id"], 0) + 1
surviving = sorted(w for w, c in counts.items() if c >= THRESHOLD)

cells = {}  # (wallet, stream, day) -> amount
txn = {}  # (wallet, day) -> count
for r in rows:
    w = r["wallet_id"]
    if w not in counts or counts[w] < THRESHOLD:
        continue
    txn[(w, r["day_index"])] = txn.get((w, r["day_index"]), 0) + 1
    cls = classify(r["category"], r["token_id"])
    if cls == "other":
        continue
    stream = {
        ("eth", "sell"): "eth_sale",
        ("eth", "buy"): "eth_purchase",
        ("stable", "sell"): "stable_sale",
        ("stable", "buy"): "stable_purchase",
    }[(cls, r["direction"])]
    key = (w, stream, r["day_index"])
    cells[key] = cells.get(key, 0.0) + r["amount"]

with open(HERE / "golden_wallets.txt", "w") as f:
    for w in surviving:
        f.write(w + "\n")

with open(HERE / "golden_cells.csv", "w", newline="") as f:
    wtr = csv.writer(f)
    wtr.writerow(["wallet_id", "stream", "day", "amount"])
    for (w, stream, day), amount in sorted(cells.items()):
        wtr.writerow([w, stream, day, repr(amount)])

with open(HERE / "golden_counts.csv", "w", newline="") as f:
    wtr = csv.writer(f)
    wtr.writerow(["wallet_id", "day", "count"])
    for (w, day), c in sorted(txn.items()):
        wtr.writerow([w, day, c])

# stream totals for the mass-conservation check
totals = {}
for (w, stream, day), amount in cells.items():
    totals[stream] = totals.get(stream, 0.0) + amount
with open(HERE / "golden_totals.json", "w") as f:
    json.dump(
        {
            "n_valid_records": len(rows),
            "n_rejected_records": len(BAD),
            "n_surviving_wallets": len(surviving),
            "stream_totals": {k: repr(v) for k, v in sorted(totals.items())},
        },
        f,
        indent=2,
    )

print(f"{len(rows)} valid rows, {len(BAD)} bad rows, {len(surviving)} surviving wallets")
print("streams:", {k: round(v, 3) for k, v in sorted(totals.items())})
