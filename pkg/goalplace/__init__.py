"""GOALPlace: goal-directed cell density targets for global placement."""

__version__ = "0.1.0"
