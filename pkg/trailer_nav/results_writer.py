"""
Results writer component for the navigation experiments.

This module writes maps, paths, trajectories, metrics and the resolved scenario
to disk. Every file is written to a temporary sibling first and moved into
place, so readers never observe partially written results.
"""

import json
import logging
import os
from typing import Any, Dict, Optional

import pandas as pd
from openpyxl import Workbook
from openpyxl.styles import Font
from openpyxl.utils import get_column_letter

CSV_FLOAT_FORMAT = '%.17g'


class ResultsWriterError(Exception):
    """Custom exception for result writing errors."""
    pass


class ResultsWriter:
    """
    Writes result artifacts atomically.

    All paths are taken relative to root unless they are absolute.
    """

    def __init__(self, root: str = '.', logger: Optional[logging.Logger] = None):
        """
        Initialize the ResultsWriter.

        Args:
            root: Directory results are written under
            logger: Optional logger; a module logger is used when omitted
        """
        self.root = root
        self.logger = logger or logging.getLogger(__name__)

    def path(self, relative: str) -> str:
        return relative if os.path.isabs(relative) else os.path.join(self.root, relative)

    def write_text(self, relative: str, text: str) -> str:
        """
        Write text with LF line endings.

        Args:
            relative: Target path
            text: File content

        Returns:
            The absolute or root-joined path written

        Raises:
            ResultsWriterError: If the directory cannot be created or the write fails
        """
        target = self.path(relative)

        def emit(temp_path: str) -> None:
            with open(temp_path, 'w', encoding='utf-8', newline='\n') as file:
                file.write(text)

        self._atomic(target, emit)
        return target

    def write_frame(self, relative: str, frame: pd.DataFrame) -> str:
        """Write a DataFrame as CSV with full float precision."""
        target = self.path(relative)

        def emit(temp_path: str) -> None:
            frame.to_csv(temp_path, index=False, float_format=CSV_FLOAT_FORMAT,
                         lineterminator='\n')

        self._atomic(target, emit)
        return target

    def write_json(self, relative: str, data: Dict[str, Any]) -> str:
        """Write a JSON document with sorted keys."""
        try:
            text = json.dumps(data, indent=2, sort_keys=True) + '\n'
        except TypeError as e:
            raise ResultsWriterError(f"Error serializing results to JSON: {e}")
        return self.write_text(relative, text)

    def write_workbook(self, relative: str, sheets: Dict[str, pd.DataFrame]) -> str:
        """
        Write one worksheet per DataFrame into an .xlsx workbook.

        Args:
            relative: Target path
            sheets: Sheet title to table, in sheet order

        Returns:
            The path written
        """
        target = self.path(relative)
        workbook = Workbook()
        workbook.remove(workbook.active)
        header_font = Font(bold=True)
        for title, frame in sheets.items():
            sheet = workbook.create_sheet(title=title)
            sheet.append([str(c) for c in frame.columns])
            for cell in sheet[1]:
                cell.font = header_font
            for row in frame.itertuples(index=False):
                sheet.append([_excel_value(v) for v in row])
            for col_idx, column in enumerate(frame.columns, start=1):
                sheet.column_dimensions[get_column_letter(col_idx)].width = max(12, len(str(column)) + 2)

        self._atomic(target, workbook.save)
        return target

    def _atomic(self, target: str, emit) -> None:
        output_dir = os.path.dirname(target)
        if output_dir and not os.path.exists(output_dir):
            try:
                os.makedirs(output_dir, exist_ok=True)
            except OSError as e:
                raise ResultsWriterError(f"Failed to create output directory: {e}")

        temp_path = target + '.tmp'
        try:
            emit(temp_path)
            os.replace(temp_path, target)
        except (IOError, OSError) as e:
            if os.path.exists(temp_path):
                try:
                    os.remove(temp_path)
                except OSError:
                    pass
            raise ResultsWriterError(f"Error writing {target}: {e}")
        self.logger.debug(f"Wrote {target}")


def _excel_value(value: Any) -> Any:
    if isinstance(value, float) and value != value:
        return None
    if hasattr(value, 'item'):
        return value.item()
    return value
