from .app import ServiceBundle, create_app, load_bundle

__all__ = ["ServiceBundle", "create_app", "load_bundle"]
