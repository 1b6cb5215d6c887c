from .base import Policy
from .cscans import ActiveBufferManager
from .lru import LRUPolicy
from .pbm import PBMPolicy

__all__ = ["Policy", "LRUPolicy", "PBMPolicy", "ActiveBufferManager"]
