from gpslab.exceptions import ProvisioningError

CREDENTIAL_SUFFIX_LEN = 7


def default_credentials(serial: str) -> tuple[str, str]:
    """
    Portal login handed out with a new tracker: user and password are both the
    last seven characters of the serial. Two serials sharing a suffix share an
    account name.
    """
    if len(serial) < CREDENTIAL_SUFFIX_LEN:
        raise ProvisioningError(
            f"serial {serial!r} is shorter than {CREDENTIAL_SUFFIX_LEN} characters"
        )
    suffix = serial[-CREDENTIAL_SUFFIX_LEN:]
    return suffix, suffix
