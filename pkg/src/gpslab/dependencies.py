from fastapi import Request

from gpslab.platform.service import Platform


class Dependencies:
    # each application serves exactly one platform, set by get_application
    @staticmethod
    def get_platform(request: Request) -> Platform:
        return request.app.state.platform
