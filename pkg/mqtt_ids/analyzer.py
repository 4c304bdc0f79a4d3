import logging

from mqtt_ids.data_loader import CaptureLoader
from mqtt_ids.dataset import FeatureTable
from mqtt_ids.features import BaseFeatureExtractor

logger = logging.getLogger(__name__)


class StreamingAnalyzer:
    def __init__(self, data_loader: CaptureLoader, extractor: BaseFeatureExtractor) -> None:
        self._data_loader = data_loader
        self._extractor = extractor
        self._records_count = 0

    def start(self) -> FeatureTable:
        table = self._extractor.extract(self._data_loader.next_input(), source=self._data_loader.source)
        self._records_count = table.n_rows
        logger.info(f"All inputs processed. Generated {self._records_count} {self._extractor.level.value} records.")
        return table
