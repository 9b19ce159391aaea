from database.registry_crud import Registry, get_registry

__all__ = ["Registry", "get_registry"]
