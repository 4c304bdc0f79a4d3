import json
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import List, Optional, Union

from mqtt_ids import __version__

MANIFEST_SUFFIX = ".manifest.json"


@dataclass(frozen=True)
class RunManifest:
    """Everything needed to repeat the run that produced an output. Embedded under "manifest" in json outputs
    and written next to csv and pcap outputs as `<output>.manifest.json`."""
    command: str
    inputs: List[str] = field(default_factory=list)
    level: Optional[str] = None
    rules: Optional[str] = None
    classifier: Optional[dict] = None
    seed: Optional[int] = None
    outputs: List[str] = field(default_factory=list)
    options: dict = field(default_factory=dict)
    version: str = __version__

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, source_dict: dict) -> "RunManifest":
        return cls(**source_dict)


def sidecar_path(output: Union[str, Path]) -> Path:
    return Path(f"{output}{MANIFEST_SUFFIX}")


def write_sidecar(manifest: RunManifest, output: Union[str, Path]) -> Path:
    path = sidecar_path(output)
    with open(path, 'w') as manifest_file:
        json.dump(manifest.to_dict(), manifest_file, indent=2, sort_keys=True)
        manifest_file.write("\n")
    return path
