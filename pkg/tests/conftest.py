from pathlib import Path

import numpy as np
import pytest

KNOWLEDGE = Path(__file__).resolve().parents[1] / "knowledge"
TABLE7 = KNOWLEDGE / "table7_monthly.csv"


def season_rows(players: int = 60, seed: int = 7, pitchers: int = 12) -> str:
    """A synthetic monthly season CSV: nonpitchers around .265, pitchers around .150."""
    rng = np.random.default_rng(seed)
    lines = ["player_id,name,is_pitcher,month,ab,h"]
    for i in range(players):
        pitcher = i < pitchers
        p = rng.uniform(0.10, 0.20) if pitcher else rng.uniform(0.22, 0.31)
        for month in range(4, 10):
            n = int(rng.integers(3, 12)) if pitcher else int(rng.integers(15, 100))
            lines.append(f"b{i:03d},Batter {i},{int(pitcher)},{month},{n},{int(rng.binomial(n, p))}")
    return "\n".join(lines) + "\n"


@pytest.fixture
def season_csv(tmp_path):
    path = tmp_path / "season.csv"
    path.write_text(season_rows(), encoding="utf-8")
    return path
