"""Per-epoch CSV log of learning rate, loss components and validation IoU."""

import csv
from pathlib import Path
from typing import Dict, List, Sequence

import pandas as pd


class EpochLog:
    """Append-only CSV; a resumed run keeps writing to the same file."""

    def __init__(self, path, fields: Sequence[str]):
        self.path = Path(path)
        self.path.parent.mkdir(parents=True, exist_ok=True)
        self.fields: List[str] = ["epoch", "lr", *fields]
        if not self.path.exists():
            self._initialize_csv()

    def _initialize_csv(self):
        """Create CSV file with header."""
        with open(self.path, "w", newline="") as f:
            csv.writer(f).writerow(self.fields)

    def record(self, epoch: int, lr: float, values: Dict[str, float]):
        row = {"epoch": epoch, "lr": lr, **values}
        with open(self.path, "a", newline="") as f:
            writer = csv.DictWriter(f, fieldnames=self.fields, extrasaction="ignore")
            writer.writerow({key: row.get(key, "") for key in self.fields})

    def truncate_after(self, epoch: int):
        """Drop rows past ``epoch`` (rows written after the last saved checkpoint)."""
        frame = self.read()
        frame = frame[frame["epoch"] <= epoch]
        frame.to_csv(self.path, index=False)

    def read(self) -> pd.DataFrame:
        return pd.read_csv(self.path)
