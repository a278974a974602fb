"""
SOAP 1.1 envelopes of the vendor's ASMX web service.

Requests carry one operation element whose children are the parameters;
responses wrap a JSON string in `<Operation>Result`. The HTTP form endpoints
answer with a bare `<string>` document instead.
"""

from typing import Mapping, Optional

from lxml import etree

from gpslab.exceptions import MalformedEnvelope

NAMESPACE = "http://tempuri.org/"
SOAP_ENV = "http://schemas.xmlsoap.org/soap/envelope/"
XSI = "http://www.w3.org/2001/XMLSchema-instance"
XSD = "http://www.w3.org/2001/XMLSchema"
ENVELOPE_NSMAP = {"soap": SOAP_ENV, "xsi": XSI, "xsd": XSD}

# no DTDs, no entity expansion, no network lookups
_PARSER = etree.XMLParser(
    resolve_entities=False,
    load_dtd=False,
    no_network=True,
    huge_tree=False,
)


def local_name(element: etree._Element) -> str:
    return etree.QName(element).localname


def _children(element: etree._Element) -> list[etree._Element]:
    return [child for child in element if isinstance(child.tag, str)]


def parse_document(body: bytes) -> etree._Element:
    try:
        return etree.fromstring(body, parser=_PARSER)
    except (etree.XMLSyntaxError, ValueError) as ex:
        raise MalformedEnvelope(f"not XML: {ex}")


def to_bytes(root: etree._Element, declaration: bool = True) -> bytes:
    return etree.tostring(root, encoding="utf-8", xml_declaration=declaration)


def build_request(operation: str, params: Mapping[str, object]) -> bytes:
    envelope = etree.Element(f"{{{SOAP_ENV}}}Envelope", nsmap=ENVELOPE_NSMAP)
    body = etree.SubElement(envelope, f"{{{SOAP_ENV}}}Body")
    call = etree.SubElement(body, f"{{{NAMESPACE}}}{operation}", nsmap={None: NAMESPACE})
    for name, value in params.items():
        etree.SubElement(call, f"{{{NAMESPACE}}}{name}").text = str(value)
    return to_bytes(envelope)


def parse_request(body: bytes) -> tuple[str, dict[str, str]]:
    """Operation name and its parameters from a SOAP 1.1 request."""
    root = parse_document(body)
    soap_body = root.find(f"{{{SOAP_ENV}}}Body")
    calls = _children(soap_body) if soap_body is not None else []
    if not calls:
        raise MalformedEnvelope("envelope has no Body")
    call = calls[0]
    params = {local_name(child): (child.text or "") for child in _children(call)}
    return local_name(call), params


def build_response(operation: str, result: str) -> bytes:
    envelope = etree.Element(f"{{{SOAP_ENV}}}Envelope", nsmap=ENVELOPE_NSMAP)
    body = etree.SubElement(envelope, f"{{{SOAP_ENV}}}Body")
    answer = etree.SubElement(
        body, f"{{{NAMESPACE}}}{operation}Response", nsmap={None: NAMESPACE}
    )
    etree.SubElement(answer, f"{{{NAMESPACE}}}{operation}Result").text = result
    return to_bytes(envelope)


def build_string(result: str) -> bytes:
    root = etree.Element(f"{{{NAMESPACE}}}string", nsmap={None: NAMESPACE})
    root.text = result
    return to_bytes(root)


def find_result(body: bytes) -> str:
    """Text of the first `...Result` or `<string>` element."""
    root = parse_document(body)
    for element in root.iter(etree.Element):
        name = local_name(element)
        if name.endswith("Result") or element.tag == f"{{{NAMESPACE}}}string":
            return element.text or ""
    raise MalformedEnvelope("response holds no result element")


def replace_field(body: bytes, name: str, value: object) -> bytes:
    """`body` with the text of its only `name` element replaced, whatever its namespace or attributes."""
    root = parse_document(body)
    matches = [e for e in root.iter(etree.Element) if local_name(e) == name]
    if len(matches) != 1:
        raise MalformedEnvelope(f"request must hold exactly one {name}, found {len(matches)}")
    matches[0].text = str(value)
    return to_bytes(root, declaration=body.lstrip().startswith(b"<?xml"))


def field(parent: etree._Element, namespace: Optional[str], tag: str, **attributes: str):
    """SubElement with attributes given as keywords."""
    qualified = f"{{{namespace}}}{tag}" if namespace else tag
    return etree.SubElement(parent, qualified, attrib=attributes)
