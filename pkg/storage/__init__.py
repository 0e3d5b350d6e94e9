"""
Storage - artifact directories and exchange formats
"""

from .artifacts import artifact_transaction, read_array, write_array, write_csv, write_json

__all__ = ['artifact_transaction', 'read_array', 'write_array', 'write_csv', 'write_json']
