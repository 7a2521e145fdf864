from datetime import datetime
from typing import Any, Dict, Iterator, List, Optional

from pydantic import BaseModel, Field, model_validator

from ubmot import __version__


class SweepMetadata(BaseModel):
    tool_version: str = __version__
    command_line: str = ""
    seed: Optional[int] = None
    timestamp: datetime = Field(default_factory=datetime.utcnow)
    extra: Dict[str, Any] = Field(default_factory=dict)


class SweepTable(BaseModel):
    """Rectangular table of named columns. Column order is insertion order."""

    columns: Dict[str, List[Any]] = Field(default_factory=dict)
    metadata: SweepMetadata = Field(default_factory=SweepMetadata)

    @model_validator(mode="after")
    def check_rectangular(self):
        lengths = {len(v) for v in self.columns.values()}
        if len(lengths) > 1:
            raise ValueError(f"columns have unequal lengths: {sorted(lengths)}")
        return self

    @classmethod
    def from_rows(cls, header: List[str], rows: List[tuple], **meta) -> "SweepTable":
        columns: Dict[str, List[Any]] = {name: [] for name in header}
        for row in rows:
            if len(row) != len(header):
                raise ValueError(f"row {row!r} does not match header {header!r}")
            for name, value in zip(header, row):
                columns[name].append(value)
        return cls(columns=columns, metadata=SweepMetadata(**meta))

    @property
    def header(self) -> List[str]:
        return list(self.columns.keys())

    def __len__(self) -> int:
        if not self.columns:
            return 0
        return len(next(iter(self.columns.values())))

    def rows(self) -> Iterator[tuple]:
        return zip(*self.columns.values())

    def column(self, name: str) -> List[Any]:
        return self.columns[name]
