"""Exceptions du codec stéréo.

Les messages commencent par une clé stable en anglais (ex. "bitstream underrun")
que la CLI et les tests peuvent rechercher, suivie du détail en français.
"""


class StereoCodecError(Exception):
    """Erreur de données : entrée invalide, flux corrompu, configuration incohérente."""


class ImageFormatError(StereoCodecError):
    def __init__(self, message, offset=None):
        self.offset = offset
        if offset is not None:
            message = f"{message} (octet {offset})"
        super().__init__(message)


class BitstreamError(StereoCodecError):
    pass


class DimensionError(StereoCodecError, ValueError):
    pass


class ConfigError(StereoCodecError, ValueError):
    pass


class BenchmarkError(StereoCodecError, ValueError):
    """Jeu de données vide, courbes RD trop courtes ou sans recouvrement."""
