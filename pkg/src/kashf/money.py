"""Money arithmetic: CPM prices are integer micro-USD to keep math exact."""

MICRO_PER_USD = 1_000_000


def to_usd(micro: int | float) -> float:
    return micro / MICRO_PER_USD


def to_micro(usd: float) -> int:
    return round(usd * MICRO_PER_USD)


def format_usd(micro: int | float, decimals: int = 2) -> str:
    return f"{to_usd(micro):.{decimals}f}"
